//! Building-damage detection on paired pre/post-disaster imagery.
//!
//! * [`imaging`]: raster preprocessing and patch augmentation.
//! * [`synth`]: synthetic disaster regions and a calibrated detector stub.
//! * [`pipeline`]: detections to labelled, fold-assigned datasets.
//! * [`models`]: the CC / PO / TTC / TTS network variants.
//! * [`metrics`], [`train`], [`experiment`]: training, ROC/AUC evaluation
//!   and the cross-region experiment matrix.

pub mod error;
pub mod experiment;
pub mod geo;
pub mod imaging;
pub mod pipeline;
pub mod metrics;
pub mod models;
pub mod synth;
pub mod train;

pub use error::{Error, Result};

/// Mixes a base seed with a tag into an independent stream seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
