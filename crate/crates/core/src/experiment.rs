//! Longitude-blocked cross-validation and the cross-region experiment
//! matrix.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::metrics::{accuracy_at, auc, format_mean_std, grid_search_threshold, mean_std, median, roc_curve};
use crate::models::{ModelConfig, Variant};
use crate::pipeline::{assign_example_folds, FoldAssignment, PatchExample};
use crate::synth::{synthesize_region, DetectorStubConfig, PipelineConfig, RegionStyle};
use crate::train::{continue_training, labels_of, predict_scores, train, EpochRecord, TrainOutcome, TrainSpec};

/// Splits `examples` by fold: `(held out, rest)`.
pub fn split_by_folds<'a>(
    examples: &'a [PatchExample],
    folds: &FoldAssignment,
    held_out: &[usize],
) -> (Vec<PatchExample>, Vec<PatchExample>) {
    examples.iter().cloned().partition(|e| {
        folds
            .fold(&e.example_id)
            .is_some_and(|f| held_out.contains(&f))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_aucs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub histories: Vec<Vec<EpochRecord>>,
}

impl CvReport {
    /// `"mean ± std"` with four decimals.
    pub fn summary(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

/// Trains one model per longitude fold, validated on that fold.
pub fn kfold_cv(config: &ModelConfig, spec: &TrainSpec, examples: &[PatchExample], k: usize) -> Result<CvReport> {
    let folds = assign_example_folds(examples, k)?;
    let mut fold_aucs = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for f in 0..k {
        let (val, train_set) = split_by_folds(examples, &folds, &[f]);
        let spec_f = TrainSpec {
            seed: derive_seed(spec.seed, &format!("fold/{f}")),
            ..spec.clone()
        };
        let outcome = train(config, &spec_f, &train_set, &val)?;
        let scores = predict_scores(&outcome.model, &val)?;
        fold_aucs.push(auc(&scores, &labels_of(&val))?);
        histories.push(outcome.history);
        log::info!("fold {f}: auc {:.4}", fold_aucs[f]);
    }
    let (mean, std) = mean_std(&fold_aucs);
    Ok(CvReport {
        fold_aucs,
        mean,
        std,
        histories,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Train on 8 of 10 longitude folds of the test region, test on 2,
    /// rotating the held-out pair.
    SameRegion,
    /// Train on the source region only.
    OneRegion,
    /// Train on the two regions other than the test region.
    TwoRegion,
    /// As `TwoRegion` plus one longitude fold of the test region, tested on
    /// the other folds.
    TwoRegionFinetune,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::SameRegion,
        Condition::OneRegion,
        Condition::TwoRegion,
        Condition::TwoRegionFinetune,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::SameRegion => "same-region",
            Condition::OneRegion => "one-region",
            Condition::TwoRegion => "two-region",
            Condition::TwoRegionFinetune => "two-region-finetune",
        }
    }
}

/// The experiment matrix file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Builtin region names or paths to region style files.
    pub regions: Vec<String>,
    /// Training region of the one-region condition.
    pub source_region: String,
    pub test_regions: Vec<String>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<Condition>,
    pub scale: f64,
    pub folds: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Extra epochs on the target-region fold after joint training in
    /// the fine-tune condition.
    #[serde(default)]
    pub finetune_epochs: usize,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub detector: DetectorStubConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_conditions() -> Vec<Condition> {
    Condition::ALL.to_vec()
}

fn default_grid_step() -> f64 {
    0.01
}

impl MatrixConfig {
    pub fn from_toml(text: &str, location: &str) -> Result<Self> {
        let cfg: MatrixConfig = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("matrix config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let known = |r: &String| self.regions.contains(r);
        if self.regions.len() != 3 {
            return Err(Error::Config(format!("the matrix needs exactly 3 regions, got {}", self.regions.len())));
        }
        if !known(&self.source_region) {
            return Err(Error::Config(format!("source region {:?} is not listed in regions", self.source_region)));
        }
        if let Some(r) = self.test_regions.iter().find(|r| !known(r) || **r == self.source_region) {
            return Err(Error::Config(format!(
                "test region {r:?} must be a listed region other than the source"
            )));
        }
        if self.folds < 2 || self.seeds.is_empty() || !(self.scale > 0.0) {
            return Err(Error::Config("need folds >= 2, at least one seed and a positive scale".into()));
        }
        if self.train.patience.is_some() {
            return Err(Error::Config("early stopping would select models on test data; remove patience".into()));
        }
        if self.model.input_size != self.pipeline.patch_size {
            return Err(Error::Config(format!(
                "model input_size {} differs from pipeline patch_size {}",
                self.model.input_size, self.pipeline.patch_size
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.detector.validate()
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.model.variant = variant;
        self
    }
}

/// One matrix cell at one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub auc: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub roc: Vec<(f64, f64)>,
    pub histories: Vec<Vec<EpochRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub condition: Condition,
    pub train_regions: String,
    pub test_region: String,
    /// Region id the row evaluates on.
    pub target: String,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub auc_median: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub seeds: Vec<SeedResult>,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "condition",
    "train_regions",
    "test_region",
    "auc_mean",
    "auc_std",
    "accuracy",
    "threshold",
];

impl ExperimentReport {
    pub fn csv_fields(&self) -> [String; 7] {
        [
            self.condition.as_str().to_string(),
            self.train_regions.clone(),
            self.test_region.clone(),
            format!("{:.4}", self.auc_mean),
            format!("{:.4}", self.auc_std),
            format!("{:.4}", self.accuracy),
            format!("{:.2}", self.threshold),
        ]
    }
}

/// Scores a trained model: grid-searched threshold on its training data,
/// then AUC and accuracy on the test data.
struct Scored {
    test_scores: Vec<f64>,
    threshold: f64,
}

fn score(outcome: &TrainOutcome, train_set: &[PatchExample], test: &[PatchExample], step: f64) -> Result<Scored> {
    let train_scores = predict_scores(&outcome.model, train_set)?;
    let (threshold, _) = grid_search_threshold(&train_scores, &labels_of(train_set), step)?;
    Ok(Scored {
        test_scores: predict_scores(&outcome.model, test)?,
        threshold,
    })
}

fn concat(parts: &[&[PatchExample]]) -> Vec<PatchExample> {
    parts.iter().flat_map(|p| p.iter().cloned()).collect()
}

struct Context<'a> {
    matrix: &'a MatrixConfig,
    seed: u64,
    seed_index: usize,
    data: &'a BTreeMap<String, Vec<PatchExample>>,
    region_folds: &'a BTreeMap<String, FoldAssignment>,
}

impl Context<'_> {
    fn fit(&self, tag: &str, train_set: &[PatchExample], monitor: &[PatchExample]) -> Result<TrainOutcome> {
        let config = self.matrix.model.clone().with_seed(derive_seed(self.seed, &format!("model/{tag}")));
        let spec = TrainSpec {
            seed: derive_seed(self.seed, &format!("train/{tag}")),
            ..self.matrix.train.clone()
        };
        train(&config, &spec, train_set, monitor)
    }

    fn finish(&self, train_n: usize, test: &[PatchExample], parts: Vec<Scored>, thresholds_apply: Vec<f64>, histories: Vec<Vec<EpochRecord>>) -> Result<SeedResult> {
        let scores: Vec<f64> = parts.iter().flat_map(|p| p.test_scores.iter().copied()).collect();
        let labels = labels_of(test);
        let correct: f64 = parts
            .iter()
            .zip(&thresholds_apply)
            .scan(0usize, |offset, (p, &t)| {
                let n = p.test_scores.len();
                let acc = accuracy_at(&p.test_scores, &labels[*offset..*offset + n], t) * n as f64;
                *offset += n;
                Some(acc)
            })
            .sum();
        let roc = roc_curve(&scores, &labels)?;
        Ok(SeedResult {
            seed: self.seed,
            auc: auc(&scores, &labels)?,
            accuracy: correct / test.len() as f64,
            threshold: thresholds_apply.iter().sum::<f64>() / thresholds_apply.len() as f64,
            n_train: train_n,
            n_test: test.len(),
            roc: roc.points,
            histories,
        })
    }

    fn same_region(&self, target: &str) -> Result<SeedResult> {
        let examples = &self.data[target];
        let folds = &self.region_folds[target];
        let k = self.matrix.folds;
        // Rotate an adjacent pair of held-out folds; out-of-fold scores are
        // pooled into one AUC.
        let rotations = k / 2;
        let mut parts = Vec::new();
        let mut thresholds = Vec::new();
        let mut histories = Vec::new();
        let mut test_all = Vec::new();
        let mut n_train = 0;
        for r in 0..rotations {
            let held: Vec<usize> = (2 * r..(2 * r + 2).min(k)).collect();
            let (test, train_set) = split_by_folds(examples, folds, &held);
            if test.is_empty() {
                continue;
            }
            let out = self.fit(&format!("same/{target}/{r}"), &train_set, &test)?;
            let s = score(&out, &train_set, &test, self.matrix.grid_step)?;
            thresholds.push(s.threshold);
            parts.push(s);
            histories.push(out.history);
            n_train += train_set.len();
            test_all.extend(test);
        }
        self.finish(n_train / rotations.max(1), &test_all, parts, thresholds, histories)
    }

    fn cross(&self, tag: &str, train_set: &[PatchExample], test: &[PatchExample]) -> Result<SeedResult> {
        let out = self.fit(tag, train_set, test)?;
        let s = score(&out, train_set, test, self.matrix.grid_step)?;
        let t = s.threshold;
        self.finish(train_set.len(), test, vec![s], vec![t], vec![out.history])
    }

    fn finetune(&self, others: &[&[PatchExample]], target: &str) -> Result<SeedResult> {
        let examples = &self.data[target];
        let folds = &self.region_folds[target];
        let fold = self.seed_index % self.matrix.folds;
        let (tune, test) = split_by_folds(examples, folds, &[fold]);
        let mut parts: Vec<&[PatchExample]> = others.to_vec();
        parts.push(&tune);
        let train_set = concat(&parts);
        let tag = format!("finetune/{target}");
        let mut out = self.fit(&tag, &train_set, &test)?;
        if self.matrix.finetune_epochs > 0 && !tune.is_empty() {
            let spec = TrainSpec {
                epochs: self.matrix.finetune_epochs,
                min_steps: 0,
                seed: derive_seed(self.seed, &format!("tune/{tag}")),
                ..self.matrix.train.clone()
            };
            let tuned = continue_training(out.model, &spec, &tune, &test)?;
            out.history.extend(tuned.history);
            out.model = tuned.model;
        }
        let s = score(&out, &train_set, &test, self.matrix.grid_step)?;
        let t = s.threshold;
        self.finish(train_set.len(), &test, vec![s], vec![t], vec![out.history])
    }
}

/// Datasets of every matrix region for one seed.
pub fn matrix_datasets(matrix: &MatrixConfig, seed: u64) -> Result<BTreeMap<String, Vec<PatchExample>>> {
    let mut out = BTreeMap::new();
    for name in &matrix.regions {
        let style = RegionStyle::resolve(name)?;
        let data = synthesize_region(&style, matrix.scale, &matrix.detector, &matrix.pipeline, derive_seed(seed, "data"))?;
        log::info!("seed {seed}: region {name}: {:?}", data.stats);
        out.insert(name.clone(), data.examples);
    }
    Ok(out)
}

fn pct(folds: usize, n: usize) -> String {
    format!("{}%", (100 * n + folds / 2) / folds)
}

/// Runs every (condition, test region) cell of the matrix for every seed.
///
/// Thresholds are grid-searched on each model's own training data. Rows
/// come out grouped by test region, conditions in matrix order.
pub fn run_experiments(matrix: &MatrixConfig) -> Result<Vec<ExperimentReport>> {
    matrix.validate()?;
    let mut cells: BTreeMap<(usize, usize), Vec<SeedResult>> = BTreeMap::new();
    for (si, &seed) in matrix.seeds.iter().enumerate() {
        let data = matrix_datasets(matrix, seed)?;
        let mut region_folds = BTreeMap::new();
        for name in &matrix.test_regions {
            region_folds.insert(name.clone(), assign_example_folds(&data[name], matrix.folds)?);
        }
        let ctx = Context {
            matrix,
            seed,
            seed_index: si,
            data: &data,
            region_folds: &region_folds,
        };
        let source = &data[&matrix.source_region];
        let mut one_region: Option<TrainOutcome> = None;
        for (ti, target) in matrix.test_regions.iter().enumerate() {
            let other = matrix
                .regions
                .iter()
                .find(|r| **r != *target && **r != matrix.source_region)
                .expect("three regions");
            for (ci, &cond) in matrix.conditions.iter().enumerate() {
                log::info!("seed {seed}: {} on {target}", cond.as_str());
                let result = match cond {
                    Condition::SameRegion => ctx.same_region(target)?,
                    Condition::OneRegion => {
                        // One model serves every test region.
                        if one_region.is_none() {
                            let monitor = &data[target];
                            one_region = Some(ctx.fit("one", source, monitor)?);
                        }
                        let out = one_region.as_ref().unwrap();
                        let s = score(out, source, &data[target], matrix.grid_step)?;
                        let t = s.threshold;
                        ctx.finish(source.len(), &data[target], vec![s], vec![t], vec![out.history.clone()])?
                    }
                    Condition::TwoRegion => {
                        let train_set = concat(&[source, &data[other]]);
                        ctx.cross(&format!("two/{target}"), &train_set, &data[target])?
                    }
                    Condition::TwoRegionFinetune => ctx.finetune(&[source, &data[other]], target)?,
                };
                log::info!("  auc {:.4}", result.auc);
                cells.entry((ti, ci)).or_default().push(result);
            }
        }
    }

    let mut reports = Vec::new();
    for ((ti, ci), seeds) in cells {
        let target = &matrix.test_regions[ti];
        let cond = matrix.conditions[ci];
        let other = matrix
            .regions
            .iter()
            .find(|r| **r != *target && **r != matrix.source_region)
            .expect("three regions");
        let k = matrix.folds;
        let (train_regions, test_region) = match cond {
            Condition::SameRegion => (target.clone(), target.clone()),
            Condition::OneRegion => (matrix.source_region.clone(), target.clone()),
            Condition::TwoRegion => (format!("{}+{other}", matrix.source_region), target.clone()),
            Condition::TwoRegionFinetune => (
                format!("{}+{other}+{} {target}", matrix.source_region, pct(k, 1)),
                format!("{} {target}", pct(k, k - 1)),
            ),
        };
        let aucs: Vec<f64> = seeds.iter().map(|s| s.auc).collect();
        let (auc_mean, auc_std) = mean_std(&aucs);
        let mean = |f: fn(&SeedResult) -> f64| seeds.iter().map(f).sum::<f64>() / seeds.len() as f64;
        reports.push(ExperimentReport {
            condition: cond,
            train_regions,
            test_region,
            target: target.clone(),
            auc_mean,
            auc_std: if auc_std.is_nan() { 0.0 } else { auc_std },
            auc_median: median(&aucs),
            accuracy: mean(|s| s.accuracy),
            threshold: mean(|s| s.threshold),
            seeds,
        });
    }
    Ok(reports)
}

/// The compact default matrix over the three builtin regions.
pub fn default_matrix() -> MatrixConfig {
    MatrixConfig {
        regions: vec!["haiti-like".into(), "mexico-like".into(), "indonesia-like".into()],
        source_region: "haiti-like".into(),
        test_regions: vec!["mexico-like".into(), "indonesia-like".into()],
        conditions: default_conditions(),
        scale: 0.01,
        folds: 10,
        seeds: vec![0, 1, 2, 3, 4],
        grid_step: 0.01,
        finetune_epochs: 0,
        model: ModelConfig::compact(Variant::Tts),
        train: TrainSpec {
            batch_size: 8,
            lr: 0.003,
            min_steps: 1000,
            ..TrainSpec::default()
        },
        detector: DetectorStubConfig::default(),
        pipeline: PipelineConfig {
            patch_size: 32,
            ..PipelineConfig::default()
        },
    }
}
