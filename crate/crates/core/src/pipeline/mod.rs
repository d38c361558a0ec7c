//! Detections to labelled examples: NMS de-duplication, damage-grade
//! binarization, label joining with negative mining, longitude-blocked
//! folds, and dataset serialization.

mod dataset;
mod detection;
mod folds;
mod labels;

pub use dataset::{
    decode_patch, encode_patch, patch_checksum, read_dataset, sha256_hex, write_dataset, DatasetReader,
    ManifestEntry, PatchExample, MANIFEST_NAME, PATCH_CHANNELS, PATCH_MAGIC,
};
pub use detection::{iou, nms, BuildingDetection, DEFAULT_NMS_IOU, DETECTION_THRESHOLD};
pub use folds::{assign_folds, FoldAssignment};
pub use labels::{
    binarize_grade, join_labels, read_annotations, DamageAnnotation, DamageGrade, JoinResult, Label,
    LabeledBuilding, DEFAULT_MATCH_RADIUS_M,
};

/// Fold assignment for a set of examples, keyed by example id.
pub fn assign_example_folds(examples: &[PatchExample], k: usize) -> crate::Result<FoldAssignment> {
    assign_folds(examples.iter().map(|e| (e.example_id.as_str(), e.longitude)), k)
}
