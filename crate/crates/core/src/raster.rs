//! Raster carriers shared by every stage of the pipeline.
//!
//! All rasters are row-major `f64` buffers. Disparity-like rasters carry a
//! validity mask; invalid entries never enter a statistic.

use crate::error::{Error, Result};
use crate::stats::SummaryStats;

/// Bit depth of Terrain Camera digital numbers.
pub const DEFAULT_BIT_DEPTH: u32 = 14;

/// Smallest raster side accepted by [`ImageGrid`].
pub const MIN_SIDE: usize = 8;

/// A single-band raster of digital numbers (DN).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    bit_depth: u32,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, bit_depth: u32, pixels: Vec<f64>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::contract(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::contract(format!(
                "bit depth must be in 1..=16, got {bit_depth}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::contract(format!(
                "pixel buffer holds {} values, expected {}x{}={}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(ImageGrid {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            DEFAULT_BIT_DEPTH,
            vec![value; width * height],
        )
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        bit_depth: u32,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, bit_depth, pixels)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    /// Largest representable DN, `2^bit_depth - 1`.
    #[inline]
    pub fn max_dn(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Same geometry and bit depth, new pixel values.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.bit_depth, pixels)
    }

    pub fn with_bit_depth(mut self, bit_depth: u32) -> Result<Self> {
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::contract(format!(
                "bit depth must be in 1..=16, got {bit_depth}"
            )));
        }
        self.bit_depth = bit_depth;
        Ok(self)
    }

    /// Copies the `width x height` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::contract(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            pixels.extend_from_slice(&self.row(y)[x0..x0 + width]);
        }
        Self::new(width, height, self.bit_depth, pixels)
    }

    pub fn stats(&self) -> SummaryStats {
        SummaryStats::from_values(self.pixels.iter().copied())
    }
}

/// Sub-pixel disparity along the image y axis, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || valid.len() != n {
            return Err(Error::contract(format!(
                "disparity buffers hold {}/{} entries, expected {width}x{height}={n}",
                values.len(),
                valid.len()
            )));
        }
        Ok(DisparityMap {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        let n = width * height;
        DisparityMap {
            width,
            height,
            values: vec![value; n],
            valid: vec![true; n],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn stats(&self) -> SummaryStats {
        SummaryStats::masked(&self.values, &self.valid)
    }

    pub fn into_parts(self) -> (usize, usize, Vec<f64>, Vec<bool>) {
        (self.width, self.height, self.values, self.valid)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::contract(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{} map",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let start = y * self.width + x0;
            values.extend_from_slice(&self.values[start..start + width]);
            valid.extend_from_slice(&self.valid[start..start + width]);
        }
        Self::new(width, height, values, valid)
    }
}

/// A disparity residual raster together with its summary statistics.
///
/// The statistics are computed on construction from the valid entries only.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    map: DisparityMap,
    stats: SummaryStats,
}

impl ResidualField {
    pub fn new(width: usize, height: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        Ok(Self::from_map(DisparityMap::new(
            width, height, values, valid,
        )?))
    }

    pub fn from_map(map: DisparityMap) -> Self {
        let stats = map.stats();
        ResidualField { map, stats }
    }

    pub fn zeros_like(map: &DisparityMap) -> Self {
        Self::from_map(DisparityMap {
            width: map.width,
            height: map.height,
            values: vec![0.0; map.values.len()],
            valid: map.valid.clone(),
        })
    }

    pub fn stats(&self) -> &SummaryStats {
        &self.stats
    }

    pub fn map(&self) -> &DisparityMap {
        &self.map
    }

    pub fn into_map(self) -> DisparityMap {
        self.map
    }

    pub fn width(&self) -> usize {
        self.map.width
    }

    pub fn height(&self) -> usize {
        self.map.height
    }

    pub fn shape(&self) -> (usize, usize) {
        self.map.shape()
    }

    pub fn values(&self) -> &[f64] {
        &self.map.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.map.valid
    }
}

pub(crate) fn check_same_shape(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!(
            "{what}: shape mismatch {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_images() {
        assert!(ImageGrid::filled(7, 8, 0.0).is_err());
        assert!(ImageGrid::filled(8, 8, 0.0).is_ok());
    }

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(ImageGrid::new(8, 8, 14, vec![0.0; 63]).is_err());
        assert!(DisparityMap::new(2, 2, vec![0.0; 4], vec![true; 3]).is_err());
    }

    #[test]
    fn max_dn_follows_bit_depth() {
        let img = ImageGrid::filled(8, 8, 0.0).unwrap();
        assert_eq!(img.max_dn(), 16383.0);
        assert_eq!(img.with_bit_depth(16).unwrap().max_dn(), 65535.0);
    }

    #[test]
    fn crop_copies_window() {
        let img = ImageGrid::from_fn(10, 10, 14, |x, y| (y * 10 + x) as f64).unwrap();
        let c = img.crop(2, 2, 8, 8).unwrap();
        assert_eq!(c.get(0, 0), 22.0);
        assert_eq!(c.get(7, 6), 89.0);
        assert!(img.crop(3, 3, 8, 8).is_err());
    }

    #[test]
    fn residual_stats_track_mask() {
        let r = ResidualField::new(
            2,
            2,
            vec![1.0, 2.0, 3.0, f64::NAN],
            vec![true, true, true, false],
        )
        .unwrap();
        assert_eq!(r.stats().count, 3);
        assert_eq!(r.stats().mean, 2.0);
        let again = SummaryStats::masked(r.values(), r.valid());
        assert_eq!(&again, r.stats());
    }
}
