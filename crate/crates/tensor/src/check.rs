//! Central finite-difference checks of analytic gradients, run in f64.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Perturbation half-width.
    pub eps: f64,
    /// Relative errors use `max(|analytic|, |numeric|, abs_floor)` as the
    /// denominator so that vanishing gradients are compared absolutely.
    pub abs_floor: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-6,
            abs_floor: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

fn evaluate<F>(tensors: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = tensors.iter().map(|t| tape.variable_ref(t)).collect();
    let loss = f(&mut tape, &vars)?;
    tape.value(loss)
        .item()
        .ok_or_else(|| TensorError::usage("gradient_check", "fragment must return a scalar"))
}

/// Compares the tape's gradient of `f` w.r.t. each of `tensors` against
/// `(f(x + eps) − f(x − eps)) / (2 eps)` and returns the largest relative
/// error.
///
/// `f` receives one variable per tensor, in order. It is evaluated twice at
/// the unperturbed point first; differing results are a usage error.
pub fn gradient_check<F>(tensors: &[Tensor<f64>], cfg: &GradCheck, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&mut Tape<'t, f64>, &[Var]) -> Result<Var>,
{
    if !(cfg.eps > 0.0) {
        return Err(TensorError::usage("gradient_check", "eps must be positive"));
    }
    let first = evaluate(tensors, &f)?;
    let second = evaluate(tensors, &f)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::usage(
            "gradient_check",
            format!("fragment is not deterministic ({first} vs {second})"),
        ));
    }

    let analytic: Vec<Tensor<f64>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.variable_ref(t)).collect();
        let loss = f(&mut tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.wrt_or_zero(&tape, v)).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let mut probe = tensors.to_vec();
    for ti in 0..tensors.len() {
        let n = tensors[ti].len();
        let entries: Vec<usize> = match cfg.max_entries {
            Some(m) if m < n => {
                let mut picked = sample(&mut rng, n, m).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        };
        for idx in entries {
            let orig = tensors[ti].data()[idx];
            probe[ti].data_mut()[idx] = orig + cfg.eps;
            let plus = evaluate(&probe, &f)?;
            probe[ti].data_mut()[idx] = orig - cfg.eps;
            let minus = evaluate(&probe, &f)?;
            probe[ti].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = analytic[ti].data()[idx];
            let denom = a.abs().max(numeric.abs()).max(cfg.abs_floor);
            let err = (a - numeric).abs() / denom;
            report.entries_checked += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = err;
                report.worst = (ti, idx);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
