use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tremor_core::experiment::{default_matrix, run_experiments, split_by_folds, ExperimentReport, MatrixConfig};
use tremor_core::metrics::{accuracy_at, auc, roc_curve};
use tremor_core::models::{Model, ModelConfig, Variant};
use tremor_core::pipeline::{assign_example_folds, read_dataset, write_dataset, PatchExample};
use tremor_core::synth::{
    build_labeled_dataset, evaluate_detector, prepare_detections, synthesize_region, DetectorQuality, DetectorStubConfig,
    PipelineConfig, RegionStats, RegionStyle,
};
use tremor_core::train::{labels_of, predict_scores, train, TrainSpec};

use crate::args::{Command, EvalArgs, ExperimentArgs, Format, PipelineArgs, ReportArgs, SynthArgs, TrainArgs};
use crate::files::{create_dir, manifest_path, read_scene, read_toml, write_csv, write_json, write_scene, write_text};
use crate::report::{read_input, render_svg, roc_series, write_report_csv, write_roc_csv, ReportInput, ReportRow, RocSeries};
use crate::{CliError, CliResult};

/// Classification threshold used by `eval`.
pub const EVAL_THRESHOLD: f64 = 0.5;

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SynthConfig {
    detector: DetectorStubConfig,
    pipeline: PipelineConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainConfig {
    model: Option<ModelConfig>,
    train: TrainSpec,
}

fn load_or_default<T: Default + serde::de::DeserializeOwned>(path: &Option<std::path::PathBuf>) -> CliResult<T> {
    match path {
        Some(p) => read_toml(p),
        None => Ok(T::default()),
    }
}

#[derive(Debug, Serialize)]
struct TruthCounts {
    damaged: usize,
    undamaged: usize,
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    region_id: String,
    seed: u64,
    scale: f64,
    buildings: TruthCounts,
    detector: DetectorQuality,
    dataset: RegionStats,
}

fn synth(a: SynthArgs) -> CliResult<()> {
    if !(a.scale > 0.0) {
        return Err(CliError::Usage(format!("--scale must be positive, got {}", a.scale)));
    }
    let cfg: SynthConfig = load_or_default(&a.config)?;
    let style = RegionStyle::resolve(&a.region)?;
    let data = synthesize_region(&style, a.scale, &cfg.detector, &cfg.pipeline, a.seed)?;
    let dir = a.out.join(&style.region_id);
    write_scene(&dir, &data.scene, &data.raw_detections)?;
    write_dataset(&data.examples, &dir.join("dataset"))?;
    let summary = SynthSummary {
        region_id: style.region_id.clone(),
        seed: a.seed,
        scale: a.scale,
        buildings: TruthCounts {
            damaged: data.scene.damaged_count(),
            undamaged: data.scene.undamaged_count(),
        },
        detector: evaluate_detector(&data.scene, &data.raw_detections, cfg.pipeline.detection_threshold),
        dataset: data.stats.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{}: {} damaged / {} undamaged buildings",
        summary.region_id, summary.buildings.damaged, summary.buildings.undamaged
    );
    println!(
        "detector: precision {:.3}, recall {:.3}",
        summary.detector.precision, summary.detector.recall
    );
    print_stats(&data.stats);
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_stats(s: &RegionStats) {
    println!(
        "{}: {} patches ({} damaged, {} undamaged), {} unmatched damage annotations, {} dropped at the border",
        s.region_id,
        s.damaged + s.undamaged,
        s.damaged,
        s.undamaged,
        s.orphans,
        s.dropped_out_of_bounds
    );
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let cfg: SynthConfig = load_or_default(&a.config)?;
    let mut scenes = Vec::new();
    let mut detections = Vec::new();
    for dir in &a.scenes {
        let (scene, raw) = read_scene(dir)?;
        detections.push(prepare_detections(&raw, &cfg.pipeline));
        scenes.push(scene);
    }
    let (examples, stats) = build_labeled_dataset(&scenes, &detections, &cfg.pipeline)?;
    // Folds are assigned per region.
    let mut by_region: BTreeMap<&str, Vec<PatchExample>> = BTreeMap::new();
    for e in &examples {
        by_region.entry(e.region_id.as_str()).or_default().push(e.clone());
    }
    let mut folds = BTreeMap::new();
    for (region, members) in &by_region {
        folds.insert(region.to_string(), assign_example_folds(members, a.folds)?);
    }
    let manifest = write_dataset(&examples, &a.out)?;
    write_json(&a.out.join("folds.json"), &folds)?;
    write_json(&a.out.join("stats.json"), &stats)?;
    stats.iter().for_each(print_stats);
    println!("wrote {}", manifest.display());
    Ok(())
}

fn default_model(patch_size: usize) -> ModelConfig {
    let base = if patch_size >= 64 {
        ModelConfig::desk(Variant::Tts)
    } else {
        ModelConfig::compact(Variant::Tts)
    };
    ModelConfig {
        input_size: patch_size,
        ..base
    }
}

fn load_examples(dataset: &Path) -> CliResult<Vec<PatchExample>> {
    let examples = read_dataset(&manifest_path(dataset))?;
    if examples.is_empty() {
        return Err(CliError::Data(format!("{}: dataset is empty", dataset.display())));
    }
    Ok(examples)
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    if a.folds < 2 {
        return Err(CliError::Usage(format!("--folds must be at least 2, got {}", a.folds)));
    }
    let cfg: TrainConfig = load_or_default(&a.config)?;
    let examples = load_examples(&a.dataset)?;
    let patch_size = examples[0].patch.shape()[1];
    let mut model_cfg = cfg.model.unwrap_or_else(|| default_model(patch_size)).with_seed(a.seed);
    if let Some(v) = a.variant {
        model_cfg = model_cfg.with_variant(v.into());
    }
    let spec = TrainSpec { seed: a.seed, ..cfg.train };
    let folds = assign_example_folds(&examples, a.folds)?;
    let (val, train_set) = split_by_folds(&examples, &folds, &[0]);
    let outcome = train(&model_cfg, &spec, &train_set, &val)?;
    create_dir(&a.out)?;
    outcome.model.save(&a.out.join("model.tlw"))?;
    write_json(&a.out.join("history.json"), &outcome.history)?;
    let rows = outcome.history.iter().map(|h| {
        vec![
            h.epoch.to_string(),
            format!("{:.6}", h.train_loss),
            h.val_auc.map(|v| format!("{v:.6}")).unwrap_or_default(),
        ]
    });
    write_csv(&a.out.join("history.csv"), &["epoch", "train_loss", "val_auc"], rows)?;
    let best = &outcome.history[outcome.best_epoch - 1];
    println!(
        "trained {} on {} examples ({} held out): epoch {} validation AUC {}",
        model_cfg.variant.as_str(),
        train_set.len(),
        val.len(),
        outcome.best_epoch,
        best.val_auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into())
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalMetrics {
    checkpoint: String,
    variant: Variant,
    examples: usize,
    damaged: usize,
    undamaged: usize,
    auc: f64,
    accuracy: f64,
    threshold: f64,
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let model = Model::load(&a.checkpoint)?;
    let examples = load_examples(&a.dataset)?;
    let scores = predict_scores(&model, &examples)?;
    let labels = labels_of(&examples);
    let name = a
        .checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let damaged = labels.iter().filter(|&&l| l).count();
    let metrics = EvalMetrics {
        checkpoint: name.clone(),
        variant: model.variant(),
        examples: examples.len(),
        damaged,
        undamaged: examples.len() - damaged,
        auc: auc(&scores, &labels)?,
        accuracy: accuracy_at(&scores, &labels, EVAL_THRESHOLD),
        threshold: EVAL_THRESHOLD,
    };
    let roc = roc_curve(&scores, &labels)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &metrics)?;
    write_roc_csv(&a.out.join("roc.csv"), &[RocSeries { model: name, points: roc.points }])?;
    println!(
        "{} on {} examples: AUC {:.4}, accuracy {:.4} at {EVAL_THRESHOLD}",
        metrics.checkpoint, metrics.examples, metrics.auc, metrics.accuracy
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn timestamp(deterministic: bool) -> Option<u64> {
    if deterministic {
        return None;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let mut matrix = match &a.config {
        Some(p) => MatrixConfig::load(p)?,
        None => default_matrix(),
    };
    if let Some(seed) = a.seed {
        matrix.seeds = vec![seed];
    }
    if let Some(scale) = a.scale {
        matrix.scale = scale;
    }
    if let Some(v) = a.variant {
        matrix = matrix.with_variant(v.into());
    }
    if let Some(k) = a.folds {
        matrix.folds = k;
    }
    let reports = run_experiments(&matrix)?;
    create_dir(&a.out)?;
    write_experiment_outputs(&a.out, &reports, timestamp(a.deterministic))?;
    print_table(&reports);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_experiment_outputs(out: &Path, reports: &[ExperimentReport], generated_at: Option<u64>) -> CliResult<()> {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    let rocs = roc_series(reports);
    write_report_csv(&out.join("report.csv"), &rows)?;
    write_json(&out.join("report.json"), reports)?;
    write_roc_csv(&out.join("roc.csv"), &rocs)?;
    write_text(&out.join("report.svg"), &render_svg(&rows, &rocs, generated_at))
}

fn print_table(reports: &[ExperimentReport]) {
    println!(
        "{:<20} {:<48} {:<18} {:>16} {:>8} {:>9}",
        "condition", "train", "test", "AUC", "accuracy", "threshold"
    );
    for r in reports {
        let f = r.csv_fields();
        println!(
            "{:<20} {:<48} {:<18} {:>16} {:>8} {:>9}",
            f[0],
            f[1],
            f[2],
            format!("{} ± {}", f[3], f[4]),
            f[5],
            f[6]
        );
    }
}

fn report(a: ReportArgs) -> CliResult<()> {
    let mut rows = Vec::new();
    let mut rocs = Vec::new();
    for p in &a.inputs {
        match read_input(p)? {
            ReportInput::Rows(r) => rows.extend(r),
            ReportInput::Roc(r) => rocs.extend(r),
            ReportInput::Both(r, c) => {
                rows.extend(r);
                rocs.extend(c);
            }
        }
    }
    create_dir(&a.out)?;
    let written = match a.format {
        Format::Svg => {
            let path = a.out.join("report.svg");
            write_text(&path, &render_svg(&rows, &rocs, timestamp(a.deterministic)))?;
            vec![path]
        }
        Format::Csv => {
            let mut paths = Vec::new();
            if !rows.is_empty() {
                let p = a.out.join("report.csv");
                write_report_csv(&p, &rows)?;
                paths.push(p);
            }
            if !rocs.is_empty() {
                let p = a.out.join("roc.csv");
                write_roc_csv(&p, &rocs)?;
                paths.push(p);
            }
            paths
        }
        Format::Json => {
            let path = a.out.join("report.json");
            write_json(&path, &rows)?;
            vec![path]
        }
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
