//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_core::experiment::ExperimentReport;
use tremor_core::geo::GeoBox;
use tremor_core::metrics::{auc, roc_curve};
use tremor_core::models::{ttc_emulation_init, Model, ModelConfig, Variant};
use tremor_core::pipeline::{
    assign_folds, binarize_grade, iou, nms, read_dataset, write_dataset, BuildingDetection, DamageGrade, Label,
    PatchExample,
};
use tremor_core::synth::{
    evaluate_detector, generate_region, noise_examples, separable_examples, simulate_detector, DetectorStubConfig,
    RegionStyle,
};
use tremor_core::train::{evaluate_auc, train, TrainSpec};
use tremor_tensor::{gradient_check, Activation, Combine, GradCheck, Tape, Tensor, TensorError, Var};

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradients),
        ("AUC oracle equivalence", auc_oracle),
        ("TTC emulates TTS", emulation),
        ("separable-data sanity", separable),
        ("null-model sanity", null_model),
        ("cross-region trend", cross_region),
        ("detector stub calibration", detector),
        ("pipeline invariant suite", pipeline_suite),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("{what} took {:.1}s, limit {}s", t.as_secs_f64(), limit.as_secs()))
}

// Criterion 1.

const SEEDS: u64 = 10;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-scale..scale))
}

/// Values at least `gap` away from zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| {
        let v: f64 = rng.random_range(gap..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Scalar `r · flatten(x)`.
fn project(tape: &mut Tape<'_, f64>, x: Var, r: &Tensor<f64>) -> tremor_tensor::Result<Var> {
    let flat = tape.flatten(x)?;
    let w = tape.constant(r.clone().reshape(vec![1, r.len()])?);
    let b = tape.constant(Tensor::zeros(vec![1]));
    let y = tape.linear(flat, w, b)?;
    Ok(tape.sum(y))
}

struct Worst {
    kinked: f64,
    smooth: f64,
}

fn layer_checks(seed: u64, worst: &mut Worst) -> tremor_tensor::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GradCheck {
        seed,
        ..GradCheck::default()
    };
    let mut kinked = |e: f64| worst.kinked = worst.kinked.max(e);

    let x = random(&mut rng, &[3, 8, 8], 1.0);
    let k = random(&mut rng, &[4, 3, 3, 3], 0.5);
    let b = random(&mut rng, &[4], 0.5);
    let r = random(&mut rng, &[4 * 8 * 8], 1.0);
    kinked(
        gradient_check(&[x.clone(), k, b], &cfg, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 1, 1)?;
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    let r = random(&mut rng, &[3 * 4 * 4], 1.0);
    kinked(
        gradient_check(std::slice::from_ref(&x), &cfg, |t, v| {
            let y = t.max_pool2d(v[0], 2, 2)?;
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    let z = off_zero(&mut rng, &[3, 4, 4], 1e-2);
    let r = random(&mut rng, &[48], 1.0);
    kinked(
        gradient_check(&[z], &cfg, |t, v| {
            let y = t.activation(v[0], Activation::Relu);
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    let a = random(&mut rng, &[2, 3, 3], 1.0);
    let c = random(&mut rng, &[2, 3, 3], 1.0);
    for (mode, width) in [(Combine::Concat, 36), (Combine::Subtract, 18)] {
        let r = random(&mut rng, &[width], 1.0);
        kinked(
            gradient_check(&[a.clone(), c.clone()], &cfg, |t, v| {
                let y = t.combine(v[0], v[1], mode)?;
                project(t, y, &r)
            })?
            .max_rel_error,
        );
    }
    let s = random(&mut rng, &[6, 3, 3], 1.0);
    let r = random(&mut rng, &[27], 1.0);
    kinked(
        gradient_check(&[s], &cfg, |t, v| {
            let y = t.slice_channels(v[0], 3..6)?;
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    let p = Tensor::scalar(rng.random_range(0.05..0.95));
    let label = (seed % 2) as f64;
    kinked(gradient_check(&[p], &cfg, |t, v| t.bce(v[0], label))?.max_rel_error);

    let mut smooth = |e: f64| worst.smooth = worst.smooth.max(e);
    let xl = random(&mut rng, &[8], 1.0);
    let w = random(&mut rng, &[4, 8], 1.0);
    let bl = random(&mut rng, &[4], 1.0);
    let r = random(&mut rng, &[4], 1.0);
    smooth(
        gradient_check(&[xl, w, bl], &cfg, |t, v| {
            let y = t.linear(v[0], v[1], v[2])?;
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    let xs = random(&mut rng, &[20], 3.0);
    let r = random(&mut rng, &[20], 1.0);
    smooth(
        gradient_check(&[xs], &cfg, |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, &r)
        })?
        .max_rel_error,
    );
    Ok(())
}

fn model_error(e: tremor_core::Error) -> TensorError {
    TensorError::Usage {
        op: "model",
        message: e.to_string(),
    }
}

/// BCE of a desk-config model w.r.t. every parameter tensor and the input,
/// a few sampled entries per tensor.
fn model_check(variant: Variant, seed: u64) -> tremor_tensor::Result<f64> {
    let model = Model::<f64>::new(ModelConfig::desk(variant).with_seed(seed)).map_err(model_error)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let size = model.config().input_size;
    let patch = Tensor::from_fn(vec![6, size, size], |_| rng.random_range(0.0..1.0));
    let mut tensors: Vec<Tensor<f64>> = model.params().iter().map(|p| p.value.clone()).collect();
    let n = tensors.len();
    tensors.push(patch);
    let label = (seed % 2) as f64;
    let cfg = GradCheck {
        max_entries: Some(3),
        seed,
        ..GradCheck::default()
    };
    let report = gradient_check(&tensors, &cfg, |tape: &mut Tape<'_, f64>, v: &[Var]| {
        let p = model.forward_with(tape, &v[..n], v[n]).map_err(model_error)?;
        tape.bce(p, label)
    })?;
    Ok(report.max_rel_error)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = Worst {
        kinked: 0.0,
        smooth: 0.0,
    };
    let mut models: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..SEEDS {
        layer_checks(seed, &mut worst).map_err(|e| format!("layer check, seed {seed}: {e}"))?;
        for v in Variant::ALL {
            let err = model_check(v, seed).map_err(|e| format!("{v} seed {seed}: {e}"))?;
            let w = models.entry(v.as_str()).or_insert(0.0);
            *w = w.max(err);
        }
    }
    let detail = format!(
        "layers {:.1e}, linear/sigmoid {:.1e}, models {}",
        worst.kinked,
        worst.smooth,
        models.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ")
    );
    ensure(worst.kinked < 1e-3, || format!("layer error too large: {detail}"))?;
    ensure(worst.smooth < 1e-6, || format!("linear/sigmoid error too large: {detail}"))?;
    ensure(models.values().all(|&e| e < 1e-3), || format!("model error too large: {detail}"))?;
    within(start, Duration::from_secs(120), "gradient checks")?;
    Ok(detail)
}

// Criterion 2.

fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut worst_trap) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(2..=500);
        // Coarse scores force ties.
        let levels = rng.random_range(2..50) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let trap = roc_curve(&scores, &labels).map_err(|e| e.to_string())?.area();
        worst = worst.max((a - brute_auc(&scores, &labels)).abs());
        worst_trap = worst_trap.max((a - trap).abs());
    }
    let detail = format!("200 sets, max |auc - concordance| {worst:.1e}, max |auc - trapezoid| {worst_trap:.1e}");
    ensure(worst <= 1e-12 && worst_trap <= 1e-12, || detail.clone())?;
    Ok(detail)
}

// Criterion 3.

fn emulation() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let tts = Model::<f64>::new(ModelConfig::desk(Variant::Tts).with_seed(seed)).map_err(|e| e.to_string())?;
        let ttc = ttc_emulation_init(&tts).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for _ in 0..10 {
            let patch = Tensor::from_fn(vec![6, 64, 64], |_| rng.random_range(0.0..1.0));
            let a = tts.predict(&patch).map_err(|e| e.to_string())?;
            let b = ttc.predict(&patch).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    let detail = format!("50 patches over 5 seeds, max |ttc - tts| {worst:.1e}");
    ensure(worst < 1e-6, || detail.clone())?;
    Ok(detail)
}

// Criterion 4.

fn separable() -> Outcome {
    let start = Instant::now();
    let all = separable_examples(700, 64, 4);
    let (train_set, val) = all.split_at(500);
    let spec = TrainSpec::default();
    let out = train(&ModelConfig::desk(Variant::Tts), &spec, train_set, val).map_err(|e| e.to_string())?;
    let best = out
        .history
        .iter()
        .filter_map(|h| h.val_auc.map(|a| (h.epoch, a)))
        .find(|&(_, a)| a >= 0.95);
    let detail = match best {
        Some((epoch, a)) => format!("validation AUC {a:.4} at epoch {epoch} of {}", spec.epochs),
        None => format!("validation AUCs {:?}", out.history.iter().map(|h| h.val_auc).collect::<Vec<_>>()),
    };
    ensure(best.is_some() && spec.epochs <= 10, || detail.clone())?;
    within(start, Duration::from_secs(300), "separable training")?;
    Ok(detail)
}

// Criterion 5.

fn null_model() -> Outcome {
    let all = noise_examples(1400, 32, 5);
    let (train_set, val) = all.split_at(400);
    let mut shuffled: Vec<PatchExample> = train_set.to_vec();
    let mut labels: Vec<Label> = shuffled.iter().map(|e| e.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(55));
    for (e, l) in shuffled.iter_mut().zip(labels) {
        e.label = l;
    }
    let spec = TrainSpec {
        epochs: 5,
        batch_size: 16,
        ..TrainSpec::default()
    };
    // No patience, so the final weights are scored and validation labels
    // never influence the model.
    let out = train(&ModelConfig::compact(Variant::Tts), &spec, &shuffled, val).map_err(|e| e.to_string())?;
    let a = evaluate_auc(&out.model, val).map_err(|e| e.to_string())?.ok_or("single-class validation set")?;
    let detail = format!("validation AUC {a:.4} on {} examples", val.len());
    ensure(val.len() >= 1000 && (0.45..=0.55).contains(&a), || detail.clone())?;
    Ok(detail)
}

// Criterion 6.

fn tremor(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tremor"))
        .args(args)
        .current_dir(cwd)
        .env("TREMOR_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("tremor {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SLACK: f64 = 0.02;

fn cross_region() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let matrix = configs().join("default.matrix");
    tremor(
        &["experiment", "--config", matrix.to_str().unwrap(), "--deterministic", "--out", "runs"],
        tmp.path(),
    )?;
    let elapsed = start.elapsed();
    let text = fs::read_to_string(tmp.path().join("runs/report.json")).map_err(|e| e.to_string())?;
    let reports: Vec<ExperimentReport> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let mut medians: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for r in &reports {
        medians.insert((r.target.as_str(), r.condition.as_str()), r.auc_median);
    }
    let order = ["same-region", "two-region-finetune", "two-region", "one-region"];
    let mut lines = Vec::new();
    let mut violations = Vec::new();
    for target in ["mexico-like", "indonesia-like"] {
        let m: Vec<f64> = order
            .iter()
            .map(|c| medians.get(&(target, *c)).copied().ok_or(format!("no {c} row for {target}")))
            .collect::<Result<_, _>>()?;
        lines.push(format!(
            "{target}: same {:.3} >= finetune {:.3} >= two {:.3} >= one {:.3}",
            m[0], m[1], m[2], m[3]
        ));
        for i in 0..3 {
            if m[i] + SLACK < m[i + 1] {
                violations.push(format!("{target}: {} {:.3} < {} {:.3}", order[i], m[i], order[i + 1], m[i + 1]));
            }
        }
    }
    let detail = format!("{} (matrix {:.0}s)", lines.join("; "), elapsed.as_secs_f64());
    ensure(violations.is_empty(), || format!("{}; {detail}", violations.join(", ")))?;
    within(start, Duration::from_secs(30 * 60), "experiment matrix")?;
    Ok(detail)
}

// Criterion 7.

fn detector() -> Outcome {
    let style = RegionStyle::builtin("haiti-like").ok_or("no haiti-like style")?;
    let scene = generate_region(&style, 5000, 0.46, 7).map_err(|e| e.to_string())?;
    let dets = simulate_detector(&scene, &DetectorStubConfig::default(), 8).map_err(|e| e.to_string())?;
    let q = evaluate_detector(&scene, &dets, 0.5);
    let detail = format!("precision {:.4}, recall {:.4} over {} buildings", q.precision, q.recall, scene.buildings.len());
    ensure((q.precision - 0.64).abs() <= 0.05 && (q.recall - 0.75).abs() <= 0.05, || detail.clone())?;
    Ok(detail)
}

// Criterion 8.

const CASES: u32 = 1000;

fn detection() -> impl Strategy<Value = BuildingDetection> {
    (0.0f64..20.0, 0.0f64..20.0, 0.5f64..6.0, 0.5f64..6.0, 0u8..=20).prop_map(|(x, y, w, h, c)| BuildingDetection {
        bbox: GeoBox {
            min_lon: x,
            min_lat: y,
            max_lon: x + w,
            max_lat: y + h,
        },
        confidence: c as f64 / 20.0,
    })
}

fn run<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn nms_props() -> Result<(), String> {
    run(
        "nms",
        (prop::collection::vec(detection(), 0..40), 0.05f64..0.95),
        |(dets, thr)| {
            let kept = nms(&dets, thr);
            prop_assert!(kept.iter().all(|k| dets.contains(k)));
            prop_assert_eq!(nms(&kept, thr), kept.clone());
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) < thr);
                }
            }
            // Every dropped detection overlaps a kept one at least as confident.
            for d in dets.iter().filter(|d| !kept.contains(d)) {
                prop_assert!(kept.iter().any(|k| k.confidence >= d.confidence && iou(&k.bbox, &d.bbox) >= thr));
            }
            Ok(())
        },
    )
}

fn fold_props() -> Result<(), String> {
    run(
        "folds",
        (prop::collection::vec((-500i32..500).prop_map(|v| v as f64 / 10.0), 1..200), any::<usize>()),
        |(lons, k_seed)| {
            let k = 1 + k_seed % lons.len().min(10);
            let ids: Vec<String> = (0..lons.len()).map(|i| format!("b{i}")).collect();
            let f = assign_folds(ids.iter().map(String::as_str).zip(lons.iter().copied()), k)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(f.fold_of.len(), lons.len());
            prop_assert_eq!(f.sizes().iter().sum::<usize>(), lons.len());
            for (id, &lon) in ids.iter().zip(&lons) {
                let fold = f.fold(id).unwrap();
                prop_assert!(f.interval_contains(fold, lon));
                prop_assert_eq!((0..k).filter(|&g| f.interval_contains(g, lon)).count(), 1);
            }
            // Blocking: a fold's longitudes never interleave with another's.
            for a in 0..k {
                for b in a + 1..k {
                    let la: Vec<f64> = ids.iter().zip(&lons).filter(|(i, _)| f.fold(i) == Some(a)).map(|(_, &l)| l).collect();
                    let lb: Vec<f64> = ids.iter().zip(&lons).filter(|(i, _)| f.fold(i) == Some(b)).map(|(_, &l)| l).collect();
                    if let (Some(max_a), Some(min_b)) = (la.iter().copied().reduce(f64::max), lb.iter().copied().reduce(f64::min)) {
                        prop_assert!(max_a < min_b);
                    }
                }
            }
            Ok(())
        },
    )
}

fn round_trip_props() -> Result<(), String> {
    let strategy = (1usize..4).prop_flat_map(|s| {
        prop::collection::vec(
            (prop::collection::vec(0.0f32..=1.0, 6 * s * s), -180.0f64..180.0, any::<bool>()),
            0..5,
        )
        .prop_map(move |items| {
            items
                .into_iter()
                .enumerate()
                .map(|(i, (data, longitude, damaged))| PatchExample {
                    example_id: format!("rt-{i}"),
                    region_id: "rt".into(),
                    longitude,
                    label: if damaged { Label::Damaged } else { Label::Undamaged },
                    patch: std::sync::Arc::new(Tensor::new(vec![6, s, s], data).unwrap()),
                })
                .collect::<Vec<_>>()
        })
    });
    run("dataset round trip", strategy, |data| {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&data, dir.path()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let back = read_dataset(&manifest).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back.len(), data.len());
        for (a, b) in data.iter().zip(&back) {
            prop_assert_eq!(&a.example_id, &b.example_id);
            prop_assert_eq!(a.longitude.to_bits(), b.longitude.to_bits());
            prop_assert_eq!(a.label, b.label);
            prop_assert!(a.patch.data().iter().zip(b.patch.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        Ok(())
    })
}

fn grade_props() -> Result<(), String> {
    run("grades", (0usize..5, any::<bool>()), |(i, upper)| {
        let g = DamageGrade::ALL[i];
        let text = if upper { g.as_str().to_uppercase() } else { g.as_str().to_lowercase() };
        let parsed: DamageGrade = text.parse().map_err(|e: tremor_core::Error| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(parsed, g);
        let damaged = matches!(g, DamageGrade::Severe | DamageGrade::Destroyed);
        prop_assert_eq!(binarize_grade(parsed) == Label::Damaged, damaged);
        Ok(())
    })
}

fn pipeline_suite() -> Outcome {
    nms_props()?;
    fold_props()?;
    round_trip_props()?;
    grade_props()?;
    Ok(format!("nms, folds, dataset round trip and grade table over {CASES} cases each"))
}

// Criterion 9.

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Files compared for byte identity: every CSV and JSON output.
fn metric_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    tree(dir)
        .into_iter()
        .filter(|(p, _)| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json" | "jsonl")))
        .collect()
}

const TRAIN_TOML: &str = "[model]\nvariant = \"tts\"\ninput_size = 32\nfc_sizes = [16, 8]\nseed = 0\n\n\
[[model.tower_blocks]]\nfilters = 4\nkernel = 3\npool = 2\n\n[model.head_block]\nfilters = 8\nkernel = 3\npool = 2\n\n\
[train]\nepochs = 2\nbatch_size = 16\n";

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let synth = fs::read_to_string(configs().join("synth.toml"))
        .unwrap()
        .replace("patch_size = 64", "patch_size = 32");
    fs::write(root.join("synth.toml"), synth).unwrap();
    fs::write(root.join("train.toml"), TRAIN_TOML).unwrap();
    let matrix = fs::read_to_string(configs().join("default.matrix"))
        .unwrap()
        .replace("seeds = [0, 1, 2, 3, 4]", "seeds = [0]")
        .replace("epochs = 10", "epochs = 1")
        .replace("min_steps = 1000", "min_steps = 0");
    fs::write(root.join("tiny.matrix"), matrix).unwrap();

    let mut compared = 0;
    for run in ["a", "b"] {
        let d = |s: &str| format!("{run}/{s}");
        tremor(&["synth", "--region", "mexico-like", "--config", "synth.toml", "--seed", "3", "--out", &d("synth")], root)?;
        tremor(&["pipeline", &d("synth/mexico-like"), "--config", "synth.toml", "--folds", "5", "--out", &d("data")], root)?;
        tremor(&["train", &d("data"), "--config", "train.toml", "--seed", "3", "--out", &d("model")], root)?;
        tremor(&["eval", &d("model/model.tlw"), &d("data"), "--out", &d("eval")], root)?;
        tremor(&["experiment", "--config", "tiny.matrix", "--seed", "3", "--out", &d("runs")], root)?;
        tremor(&["report", &d("runs/report.json"), "--format", "csv", "--out", &d("csv")], root)?;
        tremor(&["report", &d("runs/report.json"), "--format", "json", "--out", &d("json")], root)?;
        tremor(&["report", &d("runs/report.csv"), &d("runs/roc.csv"), "--deterministic", "--out", &d("svg")], root)?;
    }
    let (a, b) = (metric_files(&root.join("a")), metric_files(&root.join("b")));
    ensure(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    for (p, bytes) in &a {
        ensure(b[p] == *bytes, || format!("{} differs between runs", p.display()))?;
        compared += 1;
    }
    let svg = |r: &str| fs::read(root.join(r).join("svg/report.svg")).unwrap();
    ensure(svg("a") == svg("b"), || "deterministic SVG differs".into())?;
    Ok(format!("{compared} CSV/JSON files byte-identical across two runs of every command"))
}
