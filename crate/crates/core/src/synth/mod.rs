//! Synthetic pre/post disaster regions and a detector stub of known
//! precision and recall.

mod build;
mod detector;
mod scene;
mod style;
mod toy;

pub use build::{build_labeled_dataset, prepare_detections, PipelineConfig, RegionStats};
pub use detector::{evaluate_detector, simulate_detector, DetectorQuality, DetectorStubConfig};
pub use scene::{canvas_size, generate_region, SceneSet, TruthBuilding};
pub use style::{color_histogram, histogram_distance, RegionStyle, Rgb, BUILTIN_REGIONS, MAX_MISALIGNMENT};
pub use toy::{noise_examples, separable_examples};

use crate::derive_seed;
use crate::error::Result;
use crate::pipeline::{BuildingDetection, PatchExample};

/// Everything produced for one region by [`synthesize_region`].
#[derive(Debug, Clone)]
pub struct RegionData {
    pub scene: SceneSet,
    pub raw_detections: Vec<BuildingDetection>,
    pub examples: Vec<PatchExample>,
    pub stats: RegionStats,
}

/// Scene, detector stub and labelling for one region at `scale` of its
/// full-size class counts.
pub fn synthesize_region(
    style: &RegionStyle,
    scale: f64,
    detector: &DetectorStubConfig,
    pipeline: &PipelineConfig,
    seed: u64,
) -> Result<RegionData> {
    let (damaged, undamaged) = style.scaled_counts(scale);
    let n = (damaged + undamaged).max(1);
    let scene = generate_region(style, n, damaged as f64 / n as f64, derive_seed(seed, &style.region_id))?;
    let raw_detections = simulate_detector(&scene, detector, derive_seed(seed, &format!("{}/detector", style.region_id)))?;
    let dets = prepare_detections(&raw_detections, pipeline);
    let (examples, mut stats) = build_labeled_dataset(std::slice::from_ref(&scene), &[dets], pipeline)?;
    Ok(RegionData {
        scene,
        raw_detections,
        examples,
        stats: stats.remove(0),
    })
}
