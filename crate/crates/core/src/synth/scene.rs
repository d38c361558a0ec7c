use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::style::{RegionStyle, Rgb, MAX_MISALIGNMENT};
use crate::error::{Error, Result};
use crate::geo::{GeoBox, PixelBox};
use crate::imaging::Raster;
use crate::pipeline::{DamageAnnotation, DamageGrade};

const GAP: usize = 3;
const EDGE: usize = 2;
const PLACEMENT_TRIES: usize = 200;
/// Fraction of the canvas covered by building footprints (including gaps).
const DENSITY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBuilding {
    pub pixel_box: PixelBox,
    pub geo_box: GeoBox,
    pub damaged: bool,
    pub grade: DamageGrade,
}

impl TruthBuilding {
    pub fn longitude(&self) -> f64 {
        self.geo_box.center().0
    }
}

/// A co-registered pre/post pair with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSet {
    pub region_id: String,
    pub pre: Raster,
    pub post: Raster,
    pub buildings: Vec<TruthBuilding>,
    pub annotations: Vec<DamageAnnotation>,
}

impl SceneSet {
    pub fn damaged_count(&self) -> usize {
        self.buildings.iter().filter(|b| b.damaged).count()
    }

    pub fn undamaged_count(&self) -> usize {
        self.buildings.len() - self.damaged_count()
    }
}

/// Canvas `(height, width)` holding `n` buildings at the target density,
/// roughly four times wider than tall so longitude spreads the buildings.
pub fn canvas_size(style: &RegionStyle, n: usize) -> (usize, usize) {
    let side = (style.building_size[0] + style.building_size[1]) as f64 / 2.0 + GAP as f64;
    let area = n as f64 * side * side / DENSITY;
    let height = (area / 4.0).sqrt().ceil().max(48.0) as usize;
    let width = ((area / height as f64).ceil() as usize).max(48);
    (height, width)
}

struct Canvas {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Canvas {
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

fn jitter(rng: &mut ChaCha8Rng, amplitude: f32) -> f32 {
    if amplitude > 0.0 {
        rng.random_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}

fn terrain(style: &RegionStyle, height: usize, width: usize, rng: &mut ChaCha8Rng) -> Canvas {
    let p = style.terrain_patch;
    let (bh, bw) = (height.div_ceil(p), width.div_ceil(p));
    let blotch: Vec<f32> = (0..bh * bw).map(|_| jitter(rng, 1.5 * style.terrain_noise)).collect();
    let mut data = vec![0.0; 3 * height * width];
    for y in 0..height {
        for x in 0..width {
            let b = blotch[(y / p) * bw + x / p];
            for c in 0..3 {
                let v = style.terrain_color[c] + b + jitter(rng, style.terrain_noise);
                data[(c * height + y) * width + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Canvas { height, width, data }
}

fn paint_roof(canvas: &mut Canvas, b: &[usize; 4], color: Rgb, rng: &mut ChaCha8Rng) {
    let [x0, y0, w, h] = *b;
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let n = jitter(rng, 0.02);
            for (c, &base) in color.iter().enumerate() {
                let i = canvas.idx(c, y, x);
                canvas.data[i] = (base + n).clamp(0.0, 1.0);
            }
        }
    }
}

fn paint_damage(canvas: &mut Canvas, b: &[usize; 4], roof: Rgb, style: &RegionStyle, rng: &mut ChaCha8Rng) {
    let [x0, y0, w, h] = *b;
    let removed = rng.random_bool(style.roof_removal_prob);
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            let n = jitter(rng, style.rubble_noise);
            let ground = jitter(rng, style.terrain_noise);
            for c in 0..3 {
                let rubble = roof[c] * style.rubble_tone + n + jitter(rng, 0.2 * style.rubble_noise);
                let v = if removed {
                    0.7 * (style.terrain_color[c] + ground) + 0.3 * rubble
                } else {
                    rubble
                };
                let i = canvas.idx(c, y, x);
                canvas.data[i] = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn window(canvas: &Canvas, x0: usize, y0: usize, height: usize, width: usize, offset: f32) -> Vec<f32> {
    let mut out = Vec::with_capacity(3 * height * width);
    for c in 0..3 {
        for y in y0..y0 + height {
            let row = canvas.idx(c, y, x0);
            out.extend(canvas.data[row..row + width].iter().map(|v| (v + offset).clamp(0.0, 1.0)));
        }
    }
    out
}

fn grade_for(damaged: bool, rng: &mut ChaCha8Rng) -> DamageGrade {
    let u: f64 = rng.random();
    match (damaged, u) {
        (true, u) if u < 0.5 => DamageGrade::Severe,
        (true, _) => DamageGrade::Destroyed,
        (false, u) if u < 0.7 => DamageGrade::NoDamage,
        (false, u) if u < 0.9 => DamageGrade::Possible,
        (false, _) => DamageGrade::Moderate,
    }
}

/// Renders a region with `n_buildings` rectangular buildings, of which
/// `round(damaged_fraction * n_buildings)` are damaged in the post image.
///
/// The post image is the pre scene (plus damage) shifted by the style's
/// misalignment and brightness offset. Every building carries one
/// annotation point inside its footprint. Pure in all arguments.
pub fn generate_region(style: &RegionStyle, n_buildings: usize, damaged_fraction: f64, seed: u64) -> Result<SceneSet> {
    style.validate()?;
    if n_buildings == 0 {
        return Err(Error::Usage("n_buildings must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&damaged_fraction) {
        return Err(Error::Usage(format!("damaged_fraction {damaged_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (height, width) = canvas_size(style, n_buildings);
    let m = MAX_MISALIGNMENT as usize;
    let mut canvas = terrain(style, height + 2 * m, width + 2 * m, &mut rng);

    // Placement in raster coordinates on an occupancy bitmap grown by GAP.
    let mut occupied = vec![false; height * width];
    let [lo, hi] = style.building_size;
    let mut rects: Vec<[usize; 4]> = Vec::with_capacity(n_buildings);
    for _ in 0..n_buildings {
        let mut placed = false;
        for _ in 0..PLACEMENT_TRIES {
            let w = rng.random_range(lo..=hi);
            let h = rng.random_range(lo..=hi);
            if w + 2 * EDGE > width || h + 2 * EDGE > height {
                continue;
            }
            let x0 = rng.random_range(EDGE..=width - EDGE - w);
            let y0 = rng.random_range(EDGE..=height - EDGE - h);
            let (gx0, gy0) = (x0.saturating_sub(GAP), y0.saturating_sub(GAP));
            let (gx1, gy1) = ((x0 + w + GAP).min(width), (y0 + h + GAP).min(height));
            if (gy0..gy1).any(|y| occupied[y * width + gx0..y * width + gx1].iter().any(|&o| o)) {
                continue;
            }
            for y in y0..y0 + h {
                occupied[y * width + x0..y * width + x0 + w].fill(true);
            }
            rects.push([x0, y0, w, h]);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Generation {
                achieved: rects.len(),
                requested: n_buildings,
            });
        }
    }

    let n_damaged = (damaged_fraction * n_buildings as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_buildings).collect();
    order.shuffle(&mut rng);
    let mut damaged = vec![false; n_buildings];
    for &i in &order[..n_damaged] {
        damaged[i] = true;
    }

    let roofs: Vec<Rgb> = (0..n_buildings)
        .map(|_| style.roof_colors[rng.random_range(0..style.roof_colors.len())])
        .collect();
    let on_canvas = |r: &[usize; 4]| [r[0] + m, r[1] + m, r[2], r[3]];
    for (r, &roof) in rects.iter().zip(&roofs) {
        paint_roof(&mut canvas, &on_canvas(r), roof, &mut rng);
    }
    let pre = window(&canvas, m, m, height, width, 0.0);
    for ((r, &roof), _) in rects.iter().zip(&roofs).zip(&damaged).filter(|(_, &d)| d) {
        paint_damage(&mut canvas, &on_canvas(r), roof, style, &mut rng);
    }
    let [dx, dy] = style.misalignment;
    let post = window(
        &canvas,
        (m as i32 + dx) as usize,
        (m as i32 + dy) as usize,
        height,
        width,
        style.brightness_offset,
    );

    let geo = style.geo_transform();
    let mut buildings = Vec::with_capacity(n_buildings);
    let mut annotations = Vec::with_capacity(n_buildings);
    for (r, &is_damaged) in rects.iter().zip(&damaged) {
        let [x0, y0, w, h] = r.map(|v| v as f64);
        let pixel_box = PixelBox {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        };
        let grade = grade_for(is_damaged, &mut rng);
        let (px, py) = (
            x0 + w * rng.random_range(0.2..0.8),
            y0 + h * rng.random_range(0.2..0.8),
        );
        let (lon, lat) = geo.pixel_to_lonlat(px, py);
        annotations.push(DamageAnnotation { lon, lat, grade });
        buildings.push(TruthBuilding {
            pixel_box,
            geo_box: geo.pixel_box_to_geo(&pixel_box),
            damaged: is_damaged,
            grade,
        });
    }

    Ok(SceneSet {
        region_id: style.region_id.clone(),
        pre: Raster::new(3, height, width, pre, geo)?,
        post: Raster::new(3, height, width, post, geo)?,
        buildings,
        annotations,
    })
}
