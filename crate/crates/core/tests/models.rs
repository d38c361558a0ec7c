use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_core::models::{ttc_emulation_init, BlockConfig, Model, ModelConfig, Variant};
use tremor_core::Error;
use tremor_tensor::{gradient_check, GradCheck, Tape, Tensor, TensorError, Var};

fn random_patch<T: tremor_tensor::Real>(size: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(vec![6, size, size], |_| T::of_f64(rng.random_range(0.0..1.0)))
}

fn features<T: tremor_tensor::Real>(model: &Model<T>, patch: &Tensor<T>) -> Tensor<T> {
    let mut tape = Tape::new();
    let vars = tape.params(model.params());
    let x = tape.constant_ref(patch);
    let f = model.features(&mut tape, &vars, x).unwrap();
    tape.value(f).clone()
}

/// Copies tower A's weights into tower B.
fn tie_towers<T: tremor_tensor::Real>(model: &mut Model<T>) {
    let prefix = model.variant().as_str();
    let names: Vec<String> = model
        .params()
        .iter()
        .map(|p| p.name.clone())
        .filter(|n| n.contains(".tower_a."))
        .collect();
    for a in names {
        let b = a.replace(".tower_a.", ".tower_b.");
        let value = model.params().value(model.params().find(&a).unwrap()).clone();
        let id = model.params().find(&b).unwrap();
        *model.params_mut().value_mut(id) = value;
    }
    assert!(prefix == "tts" || prefix == "ttc");
}

#[test]
fn head_input_channels_follow_combine_mode() {
    let ttc = ModelConfig::desk(Variant::Ttc);
    let tts = ModelConfig::desk(Variant::Tts);
    assert_eq!(ttc.head_input_channels(), 64);
    assert_eq!(tts.head_input_channels(), 32);
    assert_eq!(ModelConfig::desk(Variant::Cc).head_input_channels(), 32);
}

#[test]
fn desk_parameter_count_matches_hand_formula() {
    // Tower: 16·3·5·5+16 and 32·16·3·3+32; head 64·32·3·3+64 over an 8×8
    // map after three 2× pools; fc 4096→128→32→1.
    let tower = (16 * 3 * 25 + 16) + (32 * 16 * 9 + 32);
    let head = 64 * 32 * 9 + 64;
    let fc = (128 * 4096 + 128) + (32 * 128 + 32) + (32 + 1);
    let expected = 2 * tower + head + fc;
    let model = Model::<f32>::new(ModelConfig::desk(Variant::Tts)).unwrap();
    assert_eq!(model.parameter_count(), expected);
    assert_eq!(expected, 558_785);
    for v in Variant::ALL {
        for cfg in [ModelConfig::desk(v), ModelConfig::compact(v), ModelConfig::fidelity(v)] {
            let m = Model::<f32>::new(cfg.clone()).unwrap();
            assert_eq!(m.parameter_count(), cfg.parameter_count().unwrap(), "{v}");
        }
    }
}

#[test]
fn initialization_is_seeded_and_towers_independent() {
    let a = Model::<f32>::new(ModelConfig::compact(Variant::Ttc).with_seed(3)).unwrap();
    let b = Model::<f32>::new(ModelConfig::compact(Variant::Ttc).with_seed(3)).unwrap();
    for (p, q) in a.params().iter().zip(b.params().iter()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.value, q.value);
    }
    let ta = a.params().value(a.params().find("ttc.tower_a.conv0.weight").unwrap());
    let tb = a.params().value(a.params().find("ttc.tower_b.conv0.weight").unwrap());
    assert_ne!(ta, tb);
    let c = Model::<f32>::new(ModelConfig::compact(Variant::Ttc).with_seed(4)).unwrap();
    assert_ne!(a.params().iter().next().unwrap().value, c.params().iter().next().unwrap().value);
}

#[test]
fn pooling_chain_exhaustion_is_a_config_error() {
    let mut cfg = ModelConfig::compact(Variant::Cc);
    cfg.input_size = 6;
    cfg.tower_blocks = vec![BlockConfig::new(4, 3, 2), BlockConfig::new(4, 3, 2)];
    match Model::<f32>::new(cfg) {
        Err(Error::Config(msg)) => assert!(msg.contains("head block"), "{msg}"),
        other => panic!("unexpected {other:?}"),
    }
    let mut even = ModelConfig::compact(Variant::Cc);
    even.head_block.kernel = 4;
    assert!(matches!(even.validate(), Err(Error::Config(_))));
}

#[test]
fn wrong_patch_shape_is_a_dimension_error() {
    let model = Model::<f32>::new(ModelConfig::compact(Variant::Tts)).unwrap();
    let err = model.predict(&Tensor::zeros(vec![6, 16, 16])).unwrap_err();
    assert!(matches!(err, Error::Tensor(_)), "{err:?}");
}

#[test]
fn post_only_ignores_pre_channels() {
    let model = Model::<f32>::new(ModelConfig::compact(Variant::Po).with_seed(1)).unwrap();
    for seed in 0..10 {
        let patch = random_patch::<f32>(32, seed);
        let noise = random_patch::<f32>(32, seed + 100);
        let mut data = patch.data().to_vec();
        let plane = 32 * 32;
        data[..3 * plane].copy_from_slice(&noise.data()[..3 * plane]);
        let mixed = Tensor::new(vec![6, 32, 32], data).unwrap();
        assert_eq!(model.predict(&patch).unwrap(), model.predict(&mixed).unwrap());
    }
}

#[test]
fn tied_tts_sees_zero_features_for_identical_images() {
    let mut model = Model::<f32>::new(ModelConfig::compact(Variant::Tts).with_seed(2)).unwrap();
    tie_towers(&mut model);
    let p = random_patch::<f32>(32, 5);
    let plane = 3 * 32 * 32;
    let mut data = p.data().to_vec();
    let (pre, post) = data.split_at_mut(plane);
    post.copy_from_slice(pre);
    let same = Tensor::new(vec![6, 32, 32], data).unwrap();
    assert!(features(&model, &same).data().iter().all(|&v| v == 0.0));
}

#[test]
fn tied_tts_features_are_antisymmetric_under_swap() {
    let mut model = Model::<f32>::new(ModelConfig::compact(Variant::Tts).with_seed(6)).unwrap();
    tie_towers(&mut model);
    let p = random_patch::<f32>(32, 8);
    let plane = 3 * 32 * 32;
    let mut swapped = p.data()[plane..].to_vec();
    swapped.extend_from_slice(&p.data()[..plane]);
    let swapped = Tensor::new(vec![6, 32, 32], swapped).unwrap();
    let f = features(&model, &p);
    let g = features(&model, &swapped);
    for (a, b) in f.data().iter().zip(g.data()) {
        assert_eq!(*a, -*b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn outputs_are_probabilities(seed in any::<u64>(), v in 0usize..4) {
        let model = Model::<f32>::new(ModelConfig::compact(Variant::ALL[v]).with_seed(seed % 7)).unwrap();
        let p = model.predict(&random_patch::<f32>(32, seed)).unwrap();
        prop_assert!(p.is_finite() && p > 0.0 && p < 1.0, "{}", p);
    }
}

#[test]
fn ttc_emulates_tts() {
    let tts = Model::<f32>::new(ModelConfig::compact(Variant::Tts).with_seed(9)).unwrap();
    let ttc = ttc_emulation_init(&tts).unwrap();
    assert_eq!(ttc.variant(), Variant::Ttc);
    assert!(ttc.parameter_count() > tts.parameter_count());
    for seed in 0..50 {
        let patch = random_patch::<f32>(32, seed);
        let d = (tts.predict(&patch).unwrap() - ttc.predict(&patch).unwrap()).abs();
        assert!(d < 1e-6, "seed {seed}: {d}");
    }
    assert!(ttc_emulation_init(&ttc).is_err());
}

fn input_gradient(model: &Model<f64>, patch: &Tensor<f64>) -> Tensor<f64> {
    let mut tape = Tape::new();
    let vars = tape.params(model.params());
    let x = tape.variable_ref(patch);
    let p = model.forward_with(&mut tape, &vars, x).unwrap();
    let loss = tape.sum(p);
    tape.backward(loss).unwrap().wrt_or_zero(&tape, x)
}

#[test]
fn emulated_ttc_input_gradient_matches_tts() {
    let tts = Model::<f32>::new(ModelConfig::compact(Variant::Tts).with_seed(4)).unwrap().cast::<f64>();
    let ttc = ttc_emulation_init(&tts).unwrap();
    let patch = random_patch::<f64>(32, 77);
    let g_tts = input_gradient(&tts, &patch);
    let g_ttc = input_gradient(&ttc, &patch);
    let plane = 3 * 32 * 32;
    for (a, b) in g_tts.data()[..plane].iter().zip(&g_ttc.data()[..plane]) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
    // The emulated model's input gradient also agrees with finite differences.
    let report = gradient_check(
        std::slice::from_ref(&patch),
        &GradCheck {
            max_entries: Some(40),
            ..Default::default()
        },
        |tape: &mut Tape<'_, f64>, xs: &[Var]| {
            let vars: Vec<Var> = ttc.params().iter().map(|p| tape.constant(p.value.clone())).collect();
            let p = ttc.forward_with(tape, &vars, xs[0]).map_err(|e| TensorError::Usage {
                op: "model",
                message: e.to_string(),
            })?;
            Ok(tape.sum(p))
        },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tlw");
    let model = Model::<f32>::new(ModelConfig::compact(Variant::Ttc).with_seed(12)).unwrap();
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"TLW1");
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.config(), model.config());
    assert!(loaded.params().iter().all(|p| p.name.starts_with("ttc.")));
    let patch = random_patch::<f32>(32, 1);
    assert_eq!(loaded.predict(&patch).unwrap(), model.predict(&patch).unwrap());
}

#[test]
fn model_config_toml_round_trip() {
    let cfg = ModelConfig::desk(Variant::Po).with_seed(5);
    let text = cfg.to_toml();
    assert!(text.contains("variant = \"po\""), "{text}");
    assert_eq!(ModelConfig::from_toml(&text, "m.toml").unwrap(), cfg);
    assert!(matches!(ModelConfig::from_toml("variant = \"xx\"", "m.toml"), Err(Error::Parse { .. })));
    assert_eq!("TTS".parse::<Variant>().unwrap(), Variant::Tts);
}
