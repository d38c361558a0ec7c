use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tremor_tensor::Tensor;

use crate::pipeline::{Label, PatchExample};

fn toy(n: usize, size: usize, seed: u64, prefix: &str, mut fill: impl FnMut(&mut ChaCha8Rng, bool) -> Vec<f32>) -> Vec<PatchExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let damaged = i % 2 == 0;
            let data = fill(&mut rng, damaged);
            PatchExample {
                example_id: format!("{prefix}-{i:05}"),
                region_id: prefix.into(),
                longitude: rng.random_range(0.0..1.0),
                label: if damaged { Label::Damaged } else { Label::Undamaged },
                patch: Arc::new(Tensor::new(vec![6, size, size], data).expect("toy shape")),
            }
        })
        .collect()
}

/// Balanced, linearly separable patches: damaged ones are uniformly bright
/// (about 0.75), undamaged ones uniformly dark (about 0.25), plus small
/// pixel noise.
pub fn separable_examples(n: usize, size: usize, seed: u64) -> Vec<PatchExample> {
    toy(n, size, seed, "separable", |rng, damaged| {
        let level = if damaged { 0.75 } else { 0.25 } + rng.random_range(-0.1..0.1);
        (0..6 * size * size)
            .map(|_| (level + rng.random_range(-0.05f32..0.05)).clamp(0.0, 1.0))
            .collect()
    })
}

/// Balanced uniform-noise patches whose labels carry no signal.
pub fn noise_examples(n: usize, size: usize, seed: u64) -> Vec<PatchExample> {
    toy(n, size, seed, "noise", |rng, _| (0..6 * size * size).map(|_| rng.random()).collect())
}
