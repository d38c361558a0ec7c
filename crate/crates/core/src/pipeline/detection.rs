use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geo::GeoBox;

/// Default IoU threshold for de-duplication.
pub const DEFAULT_NMS_IOU: f64 = 0.5;

/// Confidence threshold at which detections are accepted as buildings.
pub const DETECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingDetection {
    #[serde(rename = "box")]
    pub bbox: GeoBox,
    pub confidence: f64,
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn iou(a: &GeoBox, b: &GeoBox) -> f64 {
    let w = a.max_lon.min(b.max_lon) - a.min_lon.max(b.min_lon);
    let h = a.max_lat.min(b.max_lat) - a.min_lat.max(b.min_lat);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn by_confidence_desc(a: &BuildingDetection, b: &BuildingDetection) -> Ordering {
    b.confidence.partial_cmp(&a.confidence).unwrap_or(Ordering::Equal)
}

/// Greedy non-maximum suppression.
///
/// Detections are visited by descending confidence (stable for ties) and
/// kept iff their IoU with every already-kept detection is below
/// `iou_threshold`. The result is sorted by descending confidence.
pub fn nms(detections: &[BuildingDetection], iou_threshold: f64) -> Vec<BuildingDetection> {
    let mut order: Vec<BuildingDetection> = detections.to_vec();
    order.sort_by(by_confidence_desc);
    let mut kept: Vec<BuildingDetection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}
