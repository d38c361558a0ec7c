//! Finite-difference checks for every differentiable op, over 10 seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_tensor::{gradient_check, Activation, Combine, GradCheck, Tape, Tensor, Var};

const SEEDS: u64 = 10;
const TOL_KINKED: f64 = 1e-3;
const TOL_SMOOTH: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-scale..scale))
}

/// Random inputs kept at least `gap` away from zero, so relu kinks are not
/// straddled by the finite-difference stencil.
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

/// Scalar loss `r · flatten(x)` for a fixed random projection `r`.
fn project(tape: &mut Tape<'_, f64>, x: Var, r: &Tensor<f64>) -> tremor_tensor::Result<Var> {
    let flat = tape.flatten(x)?;
    let w = tape.constant(r.clone().reshape(vec![1, r.len()])?);
    let b = tape.constant(Tensor::zeros(vec![1]));
    let y = tape.linear(flat, w, b)?;
    Ok(tape.sum(y))
}

#[test]
fn conv2d_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[3, 8, 8], 1.0);
        let k = random(&mut rng, &[4, 3, 3, 3], 0.5);
        let b = random(&mut rng, &[4], 0.5);
        for (stride, padding) in [(1, 0), (1, 1), (2, 1)] {
            let out = (8 + 2 * padding - 3) / stride + 1;
            let r = random(&mut rng, &[4 * out * out], 1.0);
            let report = gradient_check(&[x.clone(), k.clone(), b.clone()], &GradCheck::default(), |tape, v| {
                let y = tape.conv2d(v[0], v[1], v[2], stride, padding)?;
                project(tape, y, &r)
            })
            .unwrap();
            assert!(
                report.max_rel_error < TOL_KINKED,
                "seed {seed} stride {stride} pad {padding}: {report:?}"
            );
        }
    }
}

#[test]
fn max_pool_gradient_lands_on_argmax() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[2, 6, 6], 1.0);

        let mut tape = Tape::new();
        let xv = tape.variable_ref(&x);
        let y = tape.max_pool2d(xv, 2, 2).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        let grad = g.wrt(xv).unwrap();

        // Brute-force argmax of each window.
        let mut expected = vec![0.0; 72];
        for c in 0..2 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut best = (c, 2 * oy, 2 * ox);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let cand = (c, 2 * oy + dy, 2 * ox + dx);
                            if x.get(&[cand.0, cand.1, cand.2]) > x.get(&[best.0, best.1, best.2]) {
                                best = cand;
                            }
                        }
                    }
                    expected[(best.0 * 6 + best.1) * 6 + best.2] = 1.0;
                }
            }
        }
        assert_eq!(grad.data(), expected.as_slice(), "seed {seed}");

        let r = random(&mut rng, &[18], 1.0);
        let report = gradient_check(&[x.clone()], &GradCheck::default(), |tape, v| {
            let y = tape.max_pool2d(v[0], 2, 2)?;
            project(tape, y, &r)
        })
        .unwrap();
        assert!(report.max_rel_error < TOL_KINKED, "seed {seed}: {report:?}");
    }
}

#[test]
fn activations_match_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = off_zero(&mut rng, &[20], 1e-2);
        let r = random(&mut rng, &[20], 1.0);
        for kind in [Activation::Relu, Activation::Sigmoid] {
            let report = gradient_check(&[x.clone()], &GradCheck::default(), |tape, v| {
                let y = tape.activation(v[0], kind);
                project(tape, y, &r)
            })
            .unwrap();
            assert!(report.max_rel_error < TOL_SMOOTH, "seed {seed} {kind:?}: {report:?}");
        }
    }
}

#[test]
fn sigmoid_slope_at_zero_is_a_quarter() {
    let x = Tensor::scalar(0.0f64);
    let mut tape = Tape::new();
    let v = tape.variable_ref(&x);
    let s = tape.sigmoid(v);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.wrt(v).unwrap().data(), &[0.25]);

    let eps = 1e-6;
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let numeric = (sig(eps) - sig(-eps)) / (2.0 * eps);
    assert!((numeric - 0.25).abs() < 1e-9);
}

#[test]
fn linear_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[8], 1.0);
        let w = random(&mut rng, &[4, 8], 1.0);
        let b = random(&mut rng, &[4], 1.0);
        let r = random(&mut rng, &[4], 1.0);
        let report = gradient_check(&[x, w, b], &GradCheck::default(), |tape, v| {
            let y = tape.linear(v[0], v[1], v[2])?;
            project(tape, y, &r)
        })
        .unwrap();
        assert!(report.max_rel_error < TOL_SMOOTH, "seed {seed}: {report:?}");
    }
}

#[test]
fn combine_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[2, 3, 3], 1.0);
        let b = random(&mut rng, &[2, 3, 3], 1.0);
        for (mode, width) in [(Combine::Concat, 36), (Combine::Subtract, 18)] {
            let r = random(&mut rng, &[width], 1.0);
            let report = gradient_check(&[a.clone(), b.clone()], &GradCheck::default(), |tape, v| {
                let y = tape.combine(v[0], v[1], mode)?;
                project(tape, y, &r)
            })
            .unwrap();
            assert!(report.max_rel_error < TOL_SMOOTH, "seed {seed} {mode:?}: {report:?}");
        }
    }
}

#[test]
fn bce_slope_matches_finite_differences() {
    let p = Tensor::scalar(0.8f64);
    let mut tape = Tape::new();
    let v = tape.variable_ref(&p);
    let l = tape.bce(v, 1.0).unwrap();
    let g = tape.backward(l).unwrap();
    assert!((g.wrt(v).unwrap().data()[0] + 1.25).abs() < 1e-12);

    for (p, y) in [(0.8, 1.0), (0.3, 0.0), (0.55, 1.0)] {
        let report = gradient_check(&[Tensor::scalar(p)], &GradCheck::default(), |tape, v| tape.bce(v[0], y)).unwrap();
        assert!(report.max_rel_error < TOL_SMOOTH, "p {p} y {y}: {report:?}");
    }
}

#[test]
fn conv_relu_pool_block_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[3, 8, 8], 1.0);
        let k = random(&mut rng, &[4, 3, 3, 3], 0.5);
        let b = random(&mut rng, &[4], 0.5);
        let r = random(&mut rng, &[4 * 4 * 4], 1.0);
        let block = |tape: &mut Tape<'_, f64>, v: &[Var]| {
            let y = tape.conv2d(v[0], v[1], v[2], 1, 1)?;
            let y = tape.relu(y);
            let y = tape.max_pool2d(y, 2, 2)?;
            project(tape, y, &r)
        };

        // Nudge the bias so that no pre-activation sits within 1e-4 of the kink.
        let mut b = b;
        loop {
            let mut tape = Tape::new();
            let xv = tape.constant_ref(&x);
            let kv = tape.constant_ref(&k);
            let bv = tape.constant_ref(&b);
            let y = tape.conv2d(xv, kv, bv, 1, 1).unwrap();
            if tape.value(y).data().iter().all(|z| z.abs() > 1e-4) {
                break;
            }
            b = b.map(|v| v + 1e-3);
        }
        let report = gradient_check(&[x, k, b], &GradCheck::default(), block).unwrap();
        assert!(report.max_rel_error < TOL_KINKED, "seed {seed}: {report:?}");
    }
}

#[test]
fn sigmoid_head_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[16], 1.0);
        let w = random(&mut rng, &[1, 16], 0.5);
        let b = random(&mut rng, &[1], 0.5);
        let label = (seed % 2) as f64;
        let report = gradient_check(&[x, w, b], &GradCheck::default(), |tape, v| {
            let z = tape.linear(v[0], v[1], v[2])?;
            let p = tape.sigmoid(z);
            let p = tape.reshape(p, vec![1])?;
            tape.bce(p, label)
        })
        .unwrap();
        assert!(report.max_rel_error < TOL_SMOOTH, "seed {seed}: {report:?}");
    }
}
