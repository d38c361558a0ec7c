use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;

pub type Rgb = [f32; 3];

/// Appearance knobs of one synthetic disaster region.
///
/// Every field is a key of the region style file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionStyle {
    pub region_id: String,
    pub terrain_color: Rgb,
    /// Amplitude of uniform per-pixel terrain noise.
    pub terrain_noise: f32,
    /// Side length of the low-frequency terrain blotches, in pixels.
    pub terrain_patch: usize,
    pub roof_colors: Vec<Rgb>,
    /// Inclusive building side length range, in pixels.
    pub building_size: [usize; 2],
    /// Amplitude of the rubble texture painted over damaged roofs.
    pub rubble_noise: f32,
    /// Mean rubble intensity as a multiple of the roof colour.
    pub rubble_tone: f32,
    /// Probability that a damaged roof is removed, exposing terrain.
    pub roof_removal_prob: f64,
    /// Post-image shift `(dx, dy)` relative to the pre image, in pixels.
    pub misalignment: [i32; 2],
    /// Added to every post-image pixel before clamping.
    pub brightness_offset: f32,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub meters_per_pixel: f64,
    /// Full-scale class counts of the region's dataset.
    pub damaged_count: usize,
    pub undamaged_count: usize,
}

pub const MAX_MISALIGNMENT: i32 = 8;
pub const BUILTIN_REGIONS: [&str; 3] = ["haiti-like", "mexico-like", "indonesia-like"];

impl RegionStyle {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("region {}: {m}", self.region_id)));
        let unit = |c: &Rgb| c.iter().all(|v| (0.0..=1.0).contains(v));
        if self.region_id.is_empty() {
            return Err(Error::Config("region_id must not be empty".into()));
        }
        if !unit(&self.terrain_color) || self.roof_colors.iter().any(|c| !unit(c)) {
            return bad("colours must lie in [0, 1]".into());
        }
        if self.roof_colors.is_empty() {
            return bad("roof_colors must not be empty".into());
        }
        if !(0.0..=0.5).contains(&self.terrain_noise) || !(0.0..=0.5).contains(&self.rubble_noise) {
            return bad("noise amplitudes must lie in [0, 0.5]".into());
        }
        if !(0.0..=2.0).contains(&self.rubble_tone) {
            return bad("rubble_tone must lie in [0, 2]".into());
        }
        if self.terrain_patch == 0 {
            return bad("terrain_patch must be positive".into());
        }
        let [lo, hi] = self.building_size;
        if lo < 2 || lo > hi {
            return bad(format!("building_size [{lo}, {hi}] must satisfy 2 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.roof_removal_prob) {
            return bad("roof_removal_prob must lie in [0, 1]".into());
        }
        if self.misalignment.iter().any(|d| d.abs() > MAX_MISALIGNMENT) {
            return bad(format!("misalignment exceeds {MAX_MISALIGNMENT} px"));
        }
        if !(-0.2..=0.2).contains(&self.brightness_offset) {
            return bad("brightness_offset must lie in [-0.2, 0.2]".into());
        }
        if !(self.meters_per_pixel > 0.0) || !self.origin_lat.is_finite() || self.origin_lat.abs() >= 80.0 {
            return bad("invalid georeference".into());
        }
        if self.damaged_count + self.undamaged_count == 0 {
            return bad("dataset counts must not both be zero".into());
        }
        Ok(())
    }

    pub fn geo_transform(&self) -> GeoTransform {
        GeoTransform::new(self.origin_lon, self.origin_lat, self.meters_per_pixel)
    }

    /// `(damaged, undamaged)` building counts at `scale` of full size.
    pub fn scaled_counts(&self, scale: f64) -> (usize, usize) {
        let s = |n: usize| (n as f64 * scale).round() as usize;
        (s(self.damaged_count), s(self.undamaged_count))
    }

    pub fn from_toml(text: &str, location: &str) -> Result<Self> {
        let style: RegionStyle = toml::from_str(text).map_err(|e| Error::parse(location, e.to_string()))?;
        style.validate()?;
        Ok(style)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("region style serializes")
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let style = match name {
            // Pale dusty terrain; collapse leaves a grey, high-texture rubble
            // field of roughly the roof's brightness.
            "haiti-like" => RegionStyle {
                region_id: name.into(),
                terrain_color: [0.68, 0.62, 0.50],
                terrain_noise: 0.05,
                terrain_patch: 12,
                roof_colors: vec![[0.85, 0.85, 0.82], [0.55, 0.58, 0.62], [0.75, 0.45, 0.35]],
                building_size: [8, 14],
                rubble_noise: 0.30,
                rubble_tone: 1.0,
                roof_removal_prob: 0.05,
                misalignment: [2, 1],
                brightness_offset: 0.08,
                origin_lon: -72.34,
                origin_lat: 18.54,
                meters_per_pixel: 0.3,
                damaged_count: 31489,
                undamaged_count: 37214,
            },
            // Green-grey suburb; collapsed roofs go dark with little texture.
            "mexico-like" => RegionStyle {
                region_id: name.into(),
                terrain_color: [0.36, 0.45, 0.32],
                terrain_noise: 0.04,
                terrain_patch: 8,
                roof_colors: vec![[0.80, 0.78, 0.72], [0.70, 0.35, 0.25], [0.62, 0.62, 0.60]],
                building_size: [9, 15],
                rubble_noise: 0.04,
                rubble_tone: 0.45,
                roof_removal_prob: 0.10,
                misalignment: [-3, 2],
                brightness_offset: -0.06,
                origin_lon: -99.23,
                origin_lat: 18.92,
                meters_per_pixel: 0.3,
                damaged_count: 1494,
                undamaged_count: 2940,
            },
            // Dark vegetated terrain; damaged roofs are mostly stripped away.
            "indonesia-like" => RegionStyle {
                region_id: name.into(),
                terrain_color: [0.20, 0.30, 0.16],
                terrain_noise: 0.06,
                terrain_patch: 6,
                roof_colors: vec![[0.72, 0.70, 0.66], [0.45, 0.52, 0.60], [0.66, 0.40, 0.30]],
                building_size: [8, 13],
                rubble_noise: 0.10,
                rubble_tone: 0.70,
                roof_removal_prob: 0.70,
                misalignment: [1, -3],
                brightness_offset: 0.04,
                origin_lon: 116.17,
                origin_lat: -8.26,
                meters_per_pixel: 0.3,
                damaged_count: 1274,
                undamaged_count: 1057,
            },
            _ => return None,
        };
        Some(style)
    }

    /// A builtin name or a path to a style file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::builtin(name_or_path) {
            Some(s) => Ok(s),
            None if Path::new(name_or_path).exists() => Self::load(Path::new(name_or_path)),
            None => Err(Error::Config(format!(
                "unknown region {name_or_path:?} (builtins: {})",
                BUILTIN_REGIONS.join(", ")
            ))),
        }
    }
}

/// Normalized 10-bin histogram per channel, concatenated (30 bins summing to 3).
pub fn color_histogram(pixels_chw: &[f32], plane: usize) -> Vec<f64> {
    const BINS: usize = 10;
    let mut hist = vec![0.0; 3 * BINS];
    for c in 0..3 {
        let chan = &pixels_chw[c * plane..(c + 1) * plane];
        for &v in chan {
            let b = ((v * BINS as f32) as usize).min(BINS - 1);
            hist[c * BINS + b] += 1.0;
        }
        for h in &mut hist[c * BINS..(c + 1) * BINS] {
            *h /= plane as f64;
        }
    }
    hist
}

/// L1 distance between two [`color_histogram`]s, in `[0, 6]`.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
