//! Local geographic coordinates.
//!
//! Scenes are small (a few hundred metres), so a north-up equirectangular
//! approximation anchored at the raster origin is used throughout.

use serde::{Deserialize, Serialize};

/// Metres per degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// Georeference of a north-up raster: the top-left corner of pixel `(0, 0)`
/// and the ground sample distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub meters_per_pixel: f64,
}

impl GeoTransform {
    pub fn new(origin_lon: f64, origin_lat: f64, meters_per_pixel: f64) -> Self {
        assert!(meters_per_pixel > 0.0, "meters_per_pixel must be positive");
        GeoTransform {
            origin_lon,
            origin_lat,
            meters_per_pixel,
        }
    }

    fn deg_per_px_lon(&self) -> f64 {
        self.meters_per_pixel / (METERS_PER_DEGREE * self.origin_lat.to_radians().cos())
    }

    fn deg_per_px_lat(&self) -> f64 {
        self.meters_per_pixel / METERS_PER_DEGREE
    }

    /// Continuous pixel coordinates (column `x`, row `y`) to `(lon, lat)`.
    /// The centre of pixel `(r, c)` is at `x = c + 0.5, y = r + 0.5`.
    pub fn pixel_to_lonlat(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.origin_lon + x * self.deg_per_px_lon(),
            self.origin_lat - y * self.deg_per_px_lat(),
        )
    }

    pub fn lonlat_to_pixel(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) / self.deg_per_px_lon(),
            (self.origin_lat - lat) / self.deg_per_px_lat(),
        )
    }

    pub fn pixel_box_to_geo(&self, b: &PixelBox) -> GeoBox {
        let (min_lon, max_lat) = self.pixel_to_lonlat(b.x0, b.y0);
        let (max_lon, min_lat) = self.pixel_to_lonlat(b.x1, b.y1);
        GeoBox {
            min_lon,
            min_lat,
            max_lon,
            max_lat,
        }
    }

    pub fn geo_box_to_pixel(&self, b: &GeoBox) -> PixelBox {
        let (x0, y0) = self.lonlat_to_pixel(b.min_lon, b.max_lat);
        let (x1, y1) = self.lonlat_to_pixel(b.max_lon, b.min_lat);
        PixelBox { x0, y0, x1, y1 }
    }
}

/// Axis-aligned rectangle in continuous pixel coordinates, `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    /// True when the boxes, each grown by `margin`, overlap.
    pub fn overlaps(&self, other: &PixelBox, margin: f64) -> bool {
        self.x0 - margin < other.x1 && other.x0 - margin < self.x1 && self.y0 - margin < other.y1 && other.y0 - margin < self.y1
    }
}

/// Longitude/latitude box, `min < max` on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBox {
    pub fn is_valid(&self) -> bool {
        self.min_lon < self.max_lon && self.min_lat < self.max_lat
    }

    pub fn area(&self) -> f64 {
        (self.max_lon - self.min_lon) * (self.max_lat - self.min_lat)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.min_lon + self.max_lon) / 2.0, (self.min_lat + self.max_lat) / 2.0)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.min_lon && lon <= self.max_lon && lat >= self.min_lat && lat <= self.max_lat
    }

    /// Ground distance in metres from a point to the box (0 inside).
    pub fn distance_m(&self, lon: f64, lat: f64) -> f64 {
        let dlon = (self.min_lon - lon).max(0.0).max(lon - self.max_lon);
        let dlat = (self.min_lat - lat).max(0.0).max(lat - self.max_lat);
        let dx = dlon * METERS_PER_DEGREE * lat.to_radians().cos();
        let dy = dlat * METERS_PER_DEGREE;
        dx.hypot(dy)
    }
}
