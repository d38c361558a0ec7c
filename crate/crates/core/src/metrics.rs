//! ROC/AUC, accuracy and decision-threshold search for binary scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    Ok((pos, neg))
}

/// Indices grouped by equal score, groups in descending score order.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    // Walk groups from the lowest score up, counting negatives below.
    let mut negatives_below = 0usize;
    let mut twice_concordant = 0u128;
    for g in tie_groups(scores).iter().rev() {
        let p = g.iter().filter(|&&i| labels[i]).count();
        let n = g.len() - p;
        twice_concordant += (2 * p * negatives_below + p * n) as u128;
        negatives_below += n;
    }
    Ok(twice_concordant as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    /// Score threshold of each point after the first.
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum()
    }
}

/// One vertex per distinct score, thresholds descending.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| labels[i]).count();
        tp += p;
        fp += g.len() - p;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(scores[g[0]]);
    }
    Ok(RocCurve { points, thresholds })
}

/// Fraction of examples with `(score >= threshold) == label`.
pub fn accuracy_at(scores: &[f64], labels: &[bool], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == l)
        .count();
    hits as f64 / scores.len() as f64
}

/// Smallest threshold on the grid `{0, step, 2·step, …, 1}` attaining the
/// maximum accuracy; returns `(threshold, accuracy)`.
pub fn grid_search_threshold(scores: &[f64], labels: &[bool], step: f64) -> Result<(f64, f64)> {
    class_counts(scores, labels)?;
    let n = (1.0 / step).round();
    if !(step > 0.0 && step < 1.0) || ((n * step) - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("grid step {step} must divide 1 evenly")));
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=n as usize {
        let t = i as f64 / n;
        let acc = accuracy_at(scores, labels, t);
        if acc > best.1 {
            best = (t, acc);
        }
    }
    Ok(best)
}

/// Sample mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// `"0.8302 ± 0.0056"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.4} ± {std:.4}")
}
