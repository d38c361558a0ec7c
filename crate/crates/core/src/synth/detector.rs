use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::SceneSet;
use crate::error::{Error, Result};
use crate::geo::PixelBox;
use crate::pipeline::{iou, nms, BuildingDetection, DEFAULT_NMS_IOU, DETECTION_THRESHOLD};

/// Stand-in for a trained building detector with known quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorStubConfig {
    /// Probability that a true building is detected.
    pub recall_target: f64,
    /// Expected precision at the detection threshold.
    pub precision_target: f64,
    /// Standard deviation of each box edge, in pixels.
    pub jitter_px: f64,
    /// Confidence range of true detections and of false positives.
    pub true_confidence: (f64, f64),
    pub false_confidence: (f64, f64),
    /// Probability that a detection is echoed by an overlapping,
    /// lower-confidence duplicate.
    pub duplicate_prob: f64,
}

impl Default for DetectorStubConfig {
    fn default() -> Self {
        DetectorStubConfig {
            recall_target: 0.75,
            precision_target: 0.64,
            jitter_px: 0.75,
            true_confidence: (0.5, 1.0),
            false_confidence: (0.5, 0.9),
            duplicate_prob: 0.25,
        }
    }
}

impl DetectorStubConfig {
    pub fn perfect() -> Self {
        DetectorStubConfig {
            recall_target: 1.0,
            precision_target: 1.0,
            jitter_px: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| DETECTION_THRESHOLD <= lo && lo < hi && hi <= 1.0;
        if !(0.0..=1.0).contains(&self.recall_target)
            || !(self.precision_target > 0.0 && self.precision_target <= 1.0)
            || !(self.jitter_px >= 0.0)
            || !(0.0..=1.0).contains(&self.duplicate_prob)
            || !range_ok(self.true_confidence)
            || !range_ok(self.false_confidence)
        {
            return Err(Error::Config(format!("invalid detector stub config {self:?}")));
        }
        Ok(())
    }
}

fn occupancy(scene: &SceneSet) -> (usize, usize, Vec<bool>) {
    let (h, w) = (scene.pre.height(), scene.pre.width());
    let mut occ = vec![false; h * w];
    for b in &scene.buildings {
        let pb = &b.pixel_box;
        let (x0, y0) = ((pb.x0 as usize).saturating_sub(1), (pb.y0 as usize).saturating_sub(1));
        let (x1, y1) = ((pb.x1 as usize + 1).min(w), (pb.y1 as usize + 1).min(h));
        for y in y0..y1 {
            occ[y * w + x0..y * w + x1].fill(true);
        }
    }
    (h, w, occ)
}

/// Emits detections for `scene`.
///
/// Each truth building is found with probability `recall_target`, with
/// Gaussian edge jitter and a confidence in `true_confidence`. False
/// positives on empty terrain are added so that precision at the
/// detection threshold is `precision_target`: their count is
/// `round(tp * (1 - p) / p)`. Duplicates always score below their source,
/// so non-maximum suppression removes them.
pub fn simulate_detector(scene: &SceneSet, cfg: &DetectorStubConfig, seed: u64) -> Result<Vec<BuildingDetection>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = scene.pre.geo;
    let edge = Normal::new(0.0, cfg.jitter_px).expect("validated jitter");
    let mut out = Vec::new();

    let mut true_positives = 0usize;
    for b in &scene.buildings {
        if !rng.random_bool(cfg.recall_target) {
            continue;
        }
        true_positives += 1;
        let pb = b.pixel_box;
        let mut j = || if cfg.jitter_px > 0.0 { edge.sample(&mut rng) } else { 0.0 };
        let (x0, y0) = (pb.x0 + j(), pb.y0 + j());
        let (x1, y1) = ((pb.x1 + j()).max(x0 + 1.0), (pb.y1 + j()).max(y0 + 1.0));
        let det = PixelBox { x0, y0, x1, y1 };
        let confidence = rng.random_range(cfg.true_confidence.0..cfg.true_confidence.1);
        out.push(BuildingDetection {
            bbox: geo.pixel_box_to_geo(&det),
            confidence,
        });
        if rng.random_bool(cfg.duplicate_prob) {
            let (sx, sy) = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
            let dup = PixelBox {
                x0: det.x0 + sx,
                y0: det.y0 + sy,
                x1: det.x1 + sx,
                y1: det.y1 + sy,
            };
            out.push(BuildingDetection {
                bbox: geo.pixel_box_to_geo(&dup),
                confidence: rng.random_range(0.3..confidence),
            });
        }
    }

    let p = cfg.precision_target;
    let n_false = (true_positives as f64 * (1.0 - p) / p).round() as usize;
    let (h, w, occ) = occupancy(scene);
    let [lo, hi] = [6usize, 14];
    let mut placed = 0;
    'fp: for _ in 0..n_false {
        for _ in 0..200 {
            let (bw, bh) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
            if bw >= w || bh >= h {
                break;
            }
            let x0 = rng.random_range(0..w - bw);
            let y0 = rng.random_range(0..h - bh);
            if (y0..y0 + bh).any(|y| occ[y * w + x0..y * w + x0 + bw].iter().any(|&o| o)) {
                continue;
            }
            let pb = PixelBox {
                x0: x0 as f64,
                y0: y0 as f64,
                x1: (x0 + bw) as f64,
                y1: (y0 + bh) as f64,
            };
            out.push(BuildingDetection {
                bbox: geo.pixel_box_to_geo(&pb),
                confidence: rng.random_range(cfg.false_confidence.0..cfg.false_confidence.1),
            });
            placed += 1;
            continue 'fp;
        }
    }
    if placed < n_false {
        log::warn!("placed {placed} of {n_false} false positives in {}", scene.region_id);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorQuality {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision and recall after NMS and thresholding, matching each kept
/// detection (by descending confidence) to the unmatched truth building of
/// highest IoU, provided that IoU is at least 0.5.
pub fn evaluate_detector(scene: &SceneSet, detections: &[BuildingDetection], threshold: f64) -> DetectorQuality {
    let kept: Vec<_> = nms(detections, DEFAULT_NMS_IOU)
        .into_iter()
        .filter(|d| d.confidence >= threshold)
        .collect();
    let mut matched = vec![false; scene.buildings.len()];
    let mut tp = 0;
    for d in &kept {
        let best = scene
            .buildings
            .iter()
            .enumerate()
            .filter(|(i, _)| !matched[*i])
            .map(|(i, b)| (i, iou(&d.bbox, &b.geo_box)))
            .filter(|&(_, v)| v >= 0.5)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            matched[i] = true;
            tp += 1;
        }
    }
    let fp = kept.len() - tp;
    let fn_ = scene.buildings.len() - tp;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    DetectorQuality {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision: ratio(tp, kept.len()),
        recall: ratio(tp, scene.buildings.len()),
    }
}
