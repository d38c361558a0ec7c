//! Raster preprocessing: histogram equalization, resampling, patch cropping
//! and geometric/colour augmentation of 6-channel pre/post patches.

use std::io::{Read, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tremor_tensor::Tensor;

use crate::error::{Error, Result};
use crate::geo::GeoTransform;

/// Channel-major image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
    pub geo: GeoTransform,
}

impl Raster {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>, geo: GeoTransform) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Usage(format!("raster dimensions must be positive, got {channels}x{height}x{width}")));
        }
        if pixels.len() != channels * height * width {
            return Err(Error::Usage(format!(
                "raster expects {} pixels, got {}",
                channels * height * width,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Usage(format!("pixel value {bad} outside [0, 1]")));
        }
        if !(geo.meters_per_pixel > 0.0) {
            return Err(Error::Usage("meters_per_pixel must be positive".into()));
        }
        Ok(Raster {
            channels,
            height,
            width,
            pixels,
            geo,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32, geo: GeoTransform) -> Self {
        Raster::new(channels, height, width, vec![value; channels * height * width], geo).expect("valid fill")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Writes `v` clamped to `[0, 1]`.
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.pixels[(c * self.height + y) * self.width + x] = v.clamp(0.0, 1.0);
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.pixels[c * n..(c + 1) * n]
    }

    fn same_grid(&self, other: &Raster) -> bool {
        self.height == other.height && self.width == other.width && self.geo == other.geo
    }
}

/// Per-channel histogram equalization through the normalized empirical CDF:
/// `v ← (cdf(v) − cdf_min) / (1 − cdf_min)` over `bins` equal-width buckets.
///
/// A channel whose pixels all fall into one bucket is returned unchanged.
pub fn histogram_equalize(raster: &Raster, bins: usize) -> Result<Raster> {
    if bins < 2 {
        return Err(Error::Usage(format!("histogram equalization needs at least 2 bins, got {bins}")));
    }
    let bucket = |v: f32| ((v as f64 * bins as f64) as usize).min(bins - 1);
    let mut out = raster.clone();
    for c in 0..raster.channels {
        let values = raster.channel(c);
        let mut counts = vec![0usize; bins];
        for &v in values {
            counts[bucket(v)] += 1;
        }
        let n = values.len() as f64;
        let mut cdf = Vec::with_capacity(bins);
        let mut running = 0usize;
        for &k in &counts {
            running += k;
            cdf.push(running as f64 / n);
        }
        let first = counts.iter().position(|&k| k > 0).expect("non-empty channel");
        let cdf_min = cdf[first];
        let span = 1.0 - cdf_min;
        if span <= 0.0 {
            continue;
        }
        for (dst, &v) in out.channel_mut(c).iter_mut().zip(values) {
            *dst = (((cdf[bucket(v)] - cdf_min) / span) as f32).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Nearest,
    Bilinear,
}

/// Resamples to a new ground sample distance. Output dimensions scale by
/// `source_mpp / target_mpp`, rounded down with a minimum of 1.
pub fn resample(raster: &Raster, target_mpp: f64, method: Resample) -> Result<Raster> {
    if !(target_mpp > 0.0) || !target_mpp.is_finite() {
        return Err(Error::Usage(format!("target resolution must be positive, got {target_mpp}")));
    }
    let src_mpp = raster.geo.meters_per_pixel;
    if target_mpp == src_mpp {
        return Ok(raster.clone());
    }
    let scale = src_mpp / target_mpp;
    let out_h = ((raster.height as f64 * scale).floor() as usize).max(1);
    let out_w = ((raster.width as f64 * scale).floor() as usize).max(1);
    let mut pixels = Vec::with_capacity(raster.channels * out_h * out_w);
    for c in 0..raster.channels {
        for oy in 0..out_h {
            let sy = (oy as f64 + 0.5) / scale;
            for ox in 0..out_w {
                let sx = (ox as f64 + 0.5) / scale;
                let v = match method {
                    Resample::Nearest => {
                        let y = (sy.floor() as usize).min(raster.height - 1);
                        let x = (sx.floor() as usize).min(raster.width - 1);
                        raster.get(c, y, x)
                    }
                    Resample::Bilinear => bilinear_sample(raster, c, sx - 0.5, sy - 0.5),
                };
                pixels.push(v);
            }
        }
    }
    let geo = GeoTransform {
        meters_per_pixel: target_mpp,
        ..raster.geo
    };
    Raster::new(raster.channels, out_h, out_w, pixels, geo)
}

/// Bilinear interpolation at pixel-centre coordinates (`x = 0` is the centre
/// of column 0), clamped to the raster.
pub fn bilinear_sample(raster: &Raster, c: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (raster.width - 1) as f64);
    let y = y.clamp(0.0, (raster.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(raster.width - 1), (y0 + 1).min(raster.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = raster.get(c, y0, x0) as f64 * (1.0 - fx) + raster.get(c, y0, x1) as f64 * fx;
    let bottom = raster.get(c, y1, x0) as f64 * (1.0 - fx) + raster.get(c, y1, x1) as f64 * fx;
    ((top * (1.0 - fy) + bottom * fy) as f32).clamp(0.0, 1.0)
}

/// Cuts a `[6, size, size]` patch centred on `center = (lon, lat)`: channels
/// 0–2 from `pre`, 3–5 from `post`. Area outside the rasters is zero.
///
/// For even sizes the centre pixel sits just below and right of the middle.
pub fn crop_patch(pre: &Raster, post: &Raster, center: (f64, f64), size: usize) -> Result<Tensor<f32>> {
    if size == 0 {
        return Err(Error::Usage("patch size must be positive".into()));
    }
    if pre.channels != 3 || post.channels != 3 {
        return Err(Error::Usage(format!(
            "pre/post rasters must be RGB, got {} and {} channels",
            pre.channels, post.channels
        )));
    }
    if !pre.same_grid(post) {
        return Err(Error::Usage("pre and post rasters must share dimensions and georeference".into()));
    }
    let (lon, lat) = center;
    let (x, y) = pre.geo.lonlat_to_pixel(lon, lat);
    if !(x >= 0.0 && y >= 0.0 && x < pre.width as f64 && y < pre.height as f64) {
        return Err(Error::OutOfBounds { lon, lat });
    }
    let (cx, cy) = (x.floor() as isize, y.floor() as isize);
    let half = (size / 2) as isize;
    let mut data = vec![0.0f32; 6 * size * size];
    for (ci, (raster, c)) in [(pre, 0), (pre, 1), (pre, 2), (post, 0), (post, 1), (post, 2)]
        .into_iter()
        .enumerate()
    {
        for r in 0..size {
            let sy = cy - half + r as isize;
            if sy < 0 || sy >= raster.height as isize {
                continue;
            }
            for col in 0..size {
                let sx = cx - half + col as isize;
                if sx >= 0 && sx < raster.width as isize {
                    data[(ci * size + r) * size + col] = raster.get(c, sy as usize, sx as usize);
                }
            }
        }
    }
    Ok(Tensor::new(vec![6, size, size], data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rotation {
    #[serde(rename = "0")]
    R0,
    #[serde(rename = "90")]
    R90,
    #[serde(rename = "180")]
    R180,
    #[serde(rename = "270")]
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];
}

/// Random augmentation applied to training patches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    /// Probability of each of a horizontal and a vertical flip.
    pub flip_prob: f64,
    pub rotation_set: Vec<Rotation>,
    /// Additive brightness shift drawn from `[-delta, delta]`.
    pub brightness_delta: f32,
    /// Contrast factor range; values are scaled about 0.5.
    pub contrast_range: (f32, f32),
    /// Draw colour changes independently per channel.
    pub per_channel: bool,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            flip_prob: 0.5,
            rotation_set: Rotation::ALL.to_vec(),
            brightness_delta: 0.05,
            contrast_range: (0.9, 1.1),
            per_channel: false,
        }
    }
}

impl AugmentPolicy {
    pub fn identity() -> Self {
        AugmentPolicy {
            flip_prob: 0.0,
            rotation_set: vec![Rotation::R0],
            brightness_delta: 0.0,
            contrast_range: (1.0, 1.0),
            per_channel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} outside [0, 1]", self.flip_prob)));
        }
        if self.rotation_set.is_empty() {
            return Err(Error::Config("rotation_set must not be empty".into()));
        }
        if !(0.0..=0.5).contains(&self.brightness_delta) {
            return Err(Error::Config(format!(
                "brightness_delta {} outside [0, 0.5]",
                self.brightness_delta
            )));
        }
        let (lo, hi) = self.contrast_range;
        if !(0.5 <= lo && lo <= hi && hi <= 2.0) {
            return Err(Error::Config(format!("contrast_range ({lo}, {hi}) not within [0.5, 2.0]")));
        }
        Ok(())
    }
}

fn transform_square(src: &[f32], dst: &mut [f32], s: usize, hflip: bool, vflip: bool, rot: Rotation) {
    for r in 0..s {
        for c in 0..s {
            // Output (r, c) reads the flipped image at the rotated position.
            let (mut sr, mut sc) = match rot {
                Rotation::R0 => (r, c),
                Rotation::R90 => (s - 1 - c, r),
                Rotation::R180 => (s - 1 - r, s - 1 - c),
                Rotation::R270 => (c, s - 1 - r),
            };
            if vflip {
                sr = s - 1 - sr;
            }
            if hflip {
                sc = s - 1 - sc;
            }
            dst[r * s + c] = src[sr * s + sc];
        }
    }
}

/// Applies one random draw of `policy` to a `[C, S, S]` patch.
///
/// The geometric transform is shared by every channel so pre and post stay
/// co-registered. Output is clamped to `[0, 1]` and is a pure function of
/// `(patch, policy, seed)`.
pub fn augment(patch: &Tensor<f32>, policy: &AugmentPolicy, seed: u64) -> Result<Tensor<f32>> {
    policy.validate()?;
    let shape = patch.shape();
    if shape.len() != 3 || shape[1] != shape[2] {
        return Err(Error::Usage(format!("augment expects a square [C, S, S] patch, got {shape:?}")));
    }
    let (channels, s) = (shape[0], shape[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hflip = rng.random_bool(policy.flip_prob);
    let vflip = rng.random_bool(policy.flip_prob);
    let rot = *policy.rotation_set.choose(&mut rng).expect("validated non-empty");

    let draw_color = |rng: &mut ChaCha8Rng| {
        let shift = if policy.brightness_delta > 0.0 {
            rng.random_range(-policy.brightness_delta..=policy.brightness_delta)
        } else {
            0.0
        };
        let (lo, hi) = policy.contrast_range;
        let contrast = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        (shift, contrast)
    };
    let shared = draw_color(&mut rng);

    let plane = s * s;
    let mut out = vec![0.0f32; patch.len()];
    for c in 0..channels {
        let src = &patch.data()[c * plane..(c + 1) * plane];
        let dst = &mut out[c * plane..(c + 1) * plane];
        transform_square(src, dst, s, hflip, vflip, rot);
        let (shift, contrast) = if policy.per_channel { draw_color(&mut rng) } else { shared };
        let offset = 0.5 - 0.5 * contrast + shift;
        for v in dst.iter_mut() {
            *v = (*v * contrast + offset).clamp(0.0, 1.0);
        }
    }
    Ok(Tensor::new(shape.to_vec(), out)?)
}

pub const RASTER_MAGIC: &[u8; 4] = b"RAS1";

/// `RAS1` fixture: magic, u32 LE C, H, W, three f64 LE geo-transform values
/// (origin lon, origin lat, metres per pixel), then f32 LE pixels.
pub fn write_raster<W: Write>(raster: &Raster, mut out: W) -> std::io::Result<()> {
    out.write_all(RASTER_MAGIC)?;
    for d in [raster.channels, raster.height, raster.width] {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for g in [raster.geo.origin_lon, raster.geo.origin_lat, raster.geo.meters_per_pixel] {
        out.write_all(&g.to_le_bytes())?;
    }
    for &v in &raster.pixels {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_raster<R: Read>(mut input: R, location: &str) -> Result<Raster> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf).map_err(|e| Error::io(location, e))?;
    let bad = |msg: &str| Error::parse(location, msg.to_string());
    if buf.len() < 40 || &buf[..4] != RASTER_MAGIC {
        return Err(bad("not a RAS1 raster"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let (c, h, w) = (u32_at(4), u32_at(8), u32_at(12));
    let geo = GeoTransform {
        origin_lon: f64_at(16),
        origin_lat: f64_at(24),
        meters_per_pixel: f64_at(32),
    };
    let n = c * h * w;
    if buf.len() != 40 + 4 * n {
        return Err(bad("pixel payload length does not match header"));
    }
    let pixels = buf[40..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Raster::new(c, h, w, pixels, geo).map_err(|e| Error::parse(location, e.to_string()))
}
