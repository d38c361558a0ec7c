use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scene::SceneSet;
use crate::error::{Error, Result};
use crate::imaging::{crop_patch, histogram_equalize};
use crate::pipeline::{join_labels, nms, BuildingDetection, PatchExample, DEFAULT_MATCH_RADIUS_M, DEFAULT_NMS_IOU, DETECTION_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub nms_iou: f64,
    pub detection_threshold: f64,
    pub match_radius_m: f64,
    pub patch_size: usize,
    pub equalize_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            nms_iou: DEFAULT_NMS_IOU,
            detection_threshold: DETECTION_THRESHOLD,
            match_radius_m: DEFAULT_MATCH_RADIUS_M,
            patch_size: 64,
            equalize_bins: 256,
        }
    }
}

/// NMS followed by the confidence threshold.
pub fn prepare_detections(raw: &[BuildingDetection], cfg: &PipelineConfig) -> Vec<BuildingDetection> {
    nms(raw, cfg.nms_iou)
        .into_iter()
        .filter(|d| d.confidence >= cfg.detection_threshold)
        .collect()
}

/// Per-region bookkeeping of [`build_labeled_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub region_id: String,
    pub detections: usize,
    pub damaged: usize,
    pub undamaged: usize,
    /// Damaged annotations that matched no detection.
    pub orphans: usize,
    /// Detections whose centre fell outside the rasters.
    pub dropped_out_of_bounds: usize,
}

/// Equalizes each scene (pre and post independently), labels the
/// deduplicated `detections[i]` of `scenes[i]` against its annotations and
/// crops one patch per labelled detection.
///
/// Example ids are `{region_id}-{index:05}` in detection order.
pub fn build_labeled_dataset(
    scenes: &[SceneSet],
    detections: &[Vec<BuildingDetection>],
    cfg: &PipelineConfig,
) -> Result<(Vec<PatchExample>, Vec<RegionStats>)> {
    if scenes.len() != detections.len() {
        return Err(Error::Usage(format!(
            "{} scenes but {} detection lists",
            scenes.len(),
            detections.len()
        )));
    }
    let mut examples = Vec::new();
    let mut stats = Vec::with_capacity(scenes.len());
    for (scene, dets) in scenes.iter().zip(detections) {
        let pre = histogram_equalize(&scene.pre, cfg.equalize_bins)?;
        let post = histogram_equalize(&scene.post, cfg.equalize_bins)?;
        let joined = join_labels(dets, &scene.annotations, cfg.match_radius_m);
        let mut s = RegionStats {
            region_id: scene.region_id.clone(),
            detections: dets.len(),
            orphans: joined.orphans,
            ..Default::default()
        };
        for (i, b) in joined.buildings.iter().enumerate() {
            let (lon, lat) = b.detection.bbox.center();
            let patch = match crop_patch(&pre, &post, (lon, lat), cfg.patch_size) {
                Ok(p) => p,
                Err(Error::OutOfBounds { .. }) => {
                    s.dropped_out_of_bounds += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if b.label.is_damaged() {
                s.damaged += 1;
            } else {
                s.undamaged += 1;
            }
            examples.push(PatchExample {
                example_id: format!("{}-{i:05}", scene.region_id),
                region_id: scene.region_id.clone(),
                longitude: lon,
                label: b.label,
                patch: Arc::new(patch),
            });
        }
        stats.push(s);
    }
    Ok((examples, stats))
}
