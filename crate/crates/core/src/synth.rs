//! Synthetic lunar-like terrain and ground-truth stereo pairs.
//!
//! Terrain is a spectral-synthesis fractal height field (white noise shaped
//! by a power-law amplitude filter in the Fourier domain) lit by a distant
//! sun, multiplied by a second fractal albedo field, then mapped affinely to
//! the requested DN mean and standard deviation.
//!
//! Shading uses the unnormalized surface normal `(-dh/dx, -dh/dy, 1)`, so a
//! sun at the zenith gives a constant shading term of exactly 1.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_same_shape, DisparityMap, ImageGrid, DEFAULT_BIT_DEPTH};

/// Ground-truth along-track shift used to build self-stereo pairs.
pub const DEFAULT_SHIFT_PX: usize = 97;

/// Terrain generator settings. Defaults reproduce the full-brightness image
/// statistics of the DN sweep (mean 1552.680 DN, std 298.060 DN).
///
/// Most of the DN variance sits in a steep, high-contrast albedo field; the
/// shaded relief adds weak small-scale texture. Local window contrast is
/// therefore a small fraction of the global standard deviation, as in
/// orbital imagery of mare plains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainParams {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Power-law exponent `beta` of the height power spectrum, `P(k) ~ k^-beta`.
    pub spectral_exponent: f64,
    pub target_mean_dn: f64,
    pub target_std_dn: f64,
    pub sun_elevation_deg: f64,
    pub sun_azimuth_deg: f64,
    /// RMS slope of the height field (rise over one pixel).
    pub rms_slope: f64,
    /// Standard deviation of the multiplicative albedo field around 1.
    pub albedo_contrast: f64,
    /// Power-law exponent of the albedo power spectrum.
    pub albedo_exponent: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        TerrainParams {
            width: 1024,
            height: 1024,
            seed: 1,
            spectral_exponent: 1.5,
            target_mean_dn: 1552.680,
            target_std_dn: 298.060,
            sun_elevation_deg: 30.0,
            sun_azimuth_deg: 90.0,
            rms_slope: 0.015,
            albedo_contrast: 0.3,
            albedo_exponent: 4.0,
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::contract(format!(
                "terrain must be at least 64x64, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.target_std_dn > 0.0) || !self.target_std_dn.is_finite() {
            return Err(Error::contract("target_std_dn must be positive"));
        }
        if !self.target_mean_dn.is_finite() {
            return Err(Error::contract("target_mean_dn must be finite"));
        }
        if !self.spectral_exponent.is_finite() || !self.albedo_exponent.is_finite() {
            return Err(Error::contract("spectral exponents must be finite"));
        }
        if !(self.rms_slope >= 0.0) || !(self.albedo_contrast >= 0.0) {
            return Err(Error::contract(
                "rms_slope and albedo_contrast must be non-negative",
            ));
        }
        if !(0.0..=90.0).contains(&self.sun_elevation_deg) {
            return Err(Error::contract("sun_elevation_deg must be in [0, 90]"));
        }
        Ok(())
    }
}

/// splitmix64 finalizer, used to derive independent seeds from a master seed.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-mean, unit-variance field whose power spectrum follows `k^-beta`.
///
/// Each row of the white-noise input comes from its own ChaCha stream, so the
/// result is independent of the thread count.
pub fn fractal_field(width: usize, height: usize, beta: f64, seed: u64) -> Vec<f64> {
    let mut data: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); width * height];
    data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(y as u64);
        for v in row.iter_mut() {
            *v = Complex::new(StandardNormal.sample(&mut rng), 0.0);
        }
    });

    let mut planner = FftPlanner::new();
    fft2(&mut data, width, height, &mut planner, false);

    data.par_chunks_mut(width)
        .enumerate()
        .for_each(|(ky, row)| {
            let fy = freq(ky, height);
            for (kx, v) in row.iter_mut().enumerate() {
                let fx = freq(kx, width);
                let k = (fx * fx + fy * fy).sqrt();
                *v *= if k == 0.0 { 0.0 } else { k.powf(-beta / 2.0) };
            }
        });

    fft2(&mut data, width, height, &mut planner, true);

    let mut field: Vec<f64> = data.iter().map(|c| c.re).collect();
    normalize(&mut field);
    field
}

/// Signed frequency in cycles per pixel for FFT bin `k` of an `n`-point transform.
fn freq(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k <= n_f / 2.0 {
        k / n_f
    } else {
        (k - n_f) / n_f
    }
}

fn fft2(
    data: &mut [Complex<f64>],
    width: usize,
    height: usize,
    planner: &mut FftPlanner<f64>,
    inverse: bool,
) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    data.par_chunks_mut(width)
        .for_each(|row| row_fft.process(row));

    let mut cols = transpose(data, width, height);
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    cols.par_chunks_mut(height)
        .for_each(|col| col_fft.process(col));
    data.copy_from_slice(&transpose(&cols, height, width));
}

fn transpose<T: Copy + Send + Sync>(src: &[T], width: usize, height: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for x in 0..width {
        for y in 0..height {
            out.push(src[y * width + x]);
        }
    }
    out
}

fn normalize(field: &mut [f64]) {
    let stats = crate::stats::SummaryStats::from_values(field.iter().copied());
    let inv = if stats.std > 0.0 {
        1.0 / stats.std
    } else {
        0.0
    };
    for v in field.iter_mut() {
        *v = (*v - stats.mean) * inv;
    }
}

/// Intermediate fields of the terrain model, before the DN mapping.
#[derive(Debug, Clone)]
pub struct TerrainLayers {
    pub height: Vec<f64>,
    pub albedo: Vec<f64>,
    pub shading: Vec<f64>,
}

pub fn terrain_layers(params: &TerrainParams) -> Result<TerrainLayers> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let mut height = fractal_field(w, h, params.spectral_exponent, derive_seed(params.seed, 0));
    let albedo_noise = fractal_field(w, h, params.albedo_exponent, derive_seed(params.seed, 1));

    // Rescale so the RMS of the central-difference slope equals rms_slope.
    let slope_rms = {
        let sum: crate::stats::NeumaierSum = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let (gx, gy) = gradient(&height, w, h, x, y);
                gx * gx + gy * gy
            })
            .collect();
        (sum.value() / (w * h) as f64).sqrt()
    };
    if slope_rms > 0.0 {
        let k = params.rms_slope / slope_rms;
        height.iter_mut().for_each(|v| *v *= k);
    }

    let elev = params.sun_elevation_deg.to_radians();
    let az = params.sun_azimuth_deg.to_radians();
    let (sx, sy, sz) = (elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
    let zenith = params.sun_elevation_deg == 90.0;
    let mut shading = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            shading[y * w + x] = if zenith {
                1.0
            } else {
                let (gx, gy) = gradient(&height, w, h, x, y);
                (sz - gx * sx - gy * sy).max(0.0)
            };
        }
    }
    let albedo = albedo_noise
        .iter()
        .map(|n| (1.0 + params.albedo_contrast * n).max(0.0))
        .collect();
    Ok(TerrainLayers {
        height,
        albedo,
        shading,
    })
}

#[inline]
fn gradient(field: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let xm = x.saturating_sub(1);
    let xp = (x + 1).min(w - 1);
    let ym = y.saturating_sub(1);
    let yp = (y + 1).min(h - 1);
    let gx = (field[y * w + xp] - field[y * w + xm]) / (xp - xm) as f64;
    let gy = (field[yp * w + x] - field[ym * w + x]) / (yp - ym) as f64;
    (gx, gy)
}

/// Renders a 14-bit terrain image. Deterministic for fixed `params`.
pub fn generate_terrain(params: &TerrainParams) -> Result<ImageGrid> {
    let layers = terrain_layers(params)?;
    let radiance: Vec<f64> = layers
        .albedo
        .iter()
        .zip(&layers.shading)
        .map(|(a, s)| a * s)
        .collect();
    let stats = crate::stats::SummaryStats::from_values(radiance.iter().copied());
    if !(stats.std > 0.0) {
        return Err(Error::contract(
            "terrain parameters produce a constant image",
        ));
    }
    let max = ((1u32 << DEFAULT_BIT_DEPTH) - 1) as f64;
    let mut clamped = 0usize;
    let pixels: Vec<f64> = radiance
        .iter()
        .map(|r| {
            let v = params.target_mean_dn + params.target_std_dn * (r - stats.mean) / stats.std;
            if !(0.0..=max).contains(&v) {
                clamped += 1;
            }
            v.clamp(0.0, max)
        })
        .collect();
    if clamped * 1000 > pixels.len() {
        log::warn!(
            "{clamped} of {} terrain pixels clamped to the DN range",
            pixels.len()
        );
    }
    ImageGrid::new(params.width, params.height, DEFAULT_BIT_DEPTH, pixels)
}

/// Multiplies every pixel by `s`. No rounding or clamping.
pub fn scale_dn(img: &ImageGrid, s: f64) -> Result<ImageGrid> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::contract(format!("scale must be positive, got {s}")));
    }
    img.with_pixels(img.pixels().iter().map(|p| p * s).collect())
}

/// A self-stereo pair cut from one image with a known along-track shift.
#[derive(Debug, Clone)]
pub struct ShiftedPair {
    pub left: ImageGrid,
    pub right: ImageGrid,
    pub truth: DisparityMap,
}

/// Cuts a self-stereo pair from `img`.
///
/// `left` covers source rows `[shift, H - shift)`, `right` covers rows
/// `[0, H - 2 shift)`, so `left(x, y) == right(x, y + shift)` and the ground
/// truth disparity is the constant `shift`.
pub fn make_shifted_pair(img: &ImageGrid, shift_px: usize) -> Result<ShiftedPair> {
    let (w, h) = img.shape();
    if 2 * shift_px >= h {
        return Err(Error::contract(format!(
            "shift {shift_px} must be less than half the image height {h}"
        )));
    }
    let crop_h = h - 2 * shift_px;
    if crop_h < crate::raster::MIN_SIDE {
        return Err(Error::contract(format!(
            "image of height {h} too small for a shift of {shift_px}"
        )));
    }
    let left = img.crop(0, shift_px, w, crop_h)?;
    let right = img.crop(0, 0, w, crop_h)?;
    let truth = DisparityMap::constant(w, crop_h, shift_px as f64);
    Ok(ShiftedPair { left, right, truth })
}

/// Output of [`warp_by_disparity`].
#[derive(Debug, Clone)]
pub struct WarpedImage {
    pub image: ImageGrid,
    /// False where the disparity is invalid or the source leaves the image.
    pub valid: Vec<bool>,
}

/// Catmull-Rom weights for fractional offset `t` in `[0, 1)`, taps at -1..=2.
#[inline]
pub fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Resamples `img` so that `out(x, y) = img(x, y + disp(x, y))`, using
/// Catmull-Rom interpolation along y.
pub fn warp_by_disparity(img: &ImageGrid, disp: &DisparityMap) -> Result<WarpedImage> {
    check_same_shape(img.shape(), disp.shape(), "warp_by_disparity")?;
    let (w, h) = img.shape();
    let src = img.pixels();
    let mut pixels = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    pixels
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (prow, vrow))| {
            for x in 0..w {
                let Some(d) = disp.get(x, y) else { continue };
                let pos = y as f64 + d;
                if !pos.is_finite() {
                    continue;
                }
                let base = pos.floor();
                let frac = pos - base;
                let i = base as i64;
                if frac == 0.0 {
                    if (0..h as i64).contains(&i) {
                        prow[x] = src[i as usize * w + x];
                        vrow[x] = true;
                    }
                    continue;
                }
                if i - 1 < 0 || i + 2 >= h as i64 {
                    continue;
                }
                let wts = catmull_rom_weights(frac);
                let mut acc = 0.0;
                for (k, wk) in wts.iter().enumerate() {
                    acc += wk * src[(i - 1 + k as i64) as usize * w + x];
                }
                prow[x] = acc;
                vrow[x] = true;
            }
        });
    Ok(WarpedImage {
        image: img.with_pixels(pixels)?,
        valid,
    })
}
