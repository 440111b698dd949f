//! Residual estimators and their application to disparity maps.
//!
//! An estimator predicts the compression-induced part of a disparity map.
//! Subtracting the prediction gives the corrected map.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_same_shape, DisparityMap, ResidualField};

pub const DEFAULT_SIGMA: f64 = 3.0;

/// Conversion between disparity error and terrain relief error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationModel {
    pub meters_per_pixel_disparity: f64,
}

impl ElevationModel {
    pub fn new(meters_per_pixel_disparity: f64) -> Result<Self> {
        if !(meters_per_pixel_disparity > 0.0) || !meters_per_pixel_disparity.is_finite() {
            return Err(Error::contract(
                "meters_per_pixel_disparity must be strictly positive",
            ));
        }
        Ok(ElevationModel {
            meters_per_pixel_disparity,
        })
    }
}

impl Default for ElevationModel {
    /// 0.3 px of disparity error maps to 5.45 m of relief error.
    fn default() -> Self {
        ElevationModel {
            meters_per_pixel_disparity: 5.45 / 0.3,
        }
    }
}

/// Relief error in meters for a disparity error in pixels.
pub fn elevation_error(disp_error_px: f64, model: &ElevationModel) -> f64 {
    disp_error_px * model.meters_per_pixel_disparity
}

/// Normalized 1D Gaussian taps for offsets `-radius..=radius`, with
/// `radius = ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Gaussian blur that ignores invalid pixels.
///
/// Each output is `sum(k * m * v) / sum(k * m)` over the truncated kernel,
/// where `m` is the mask. Taps falling outside the raster count as invalid.
/// Invalid outputs are 0.
pub fn masked_gaussian_blur(map: &DisparityMap, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::contract(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let (w, h) = map.shape();
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as i64;
    let weighted: Vec<f64> = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&v, &ok)| if ok { v } else { 0.0 })
        .collect();
    let mask: Vec<f64> = map.valid().iter().map(|&ok| ok as u8 as f64).collect();

    let horizontal = |src: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let s = &src[y * w..(y + 1) * w];
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    let xx = x as i64 + j as i64 - radius;
                    if (0..w as i64).contains(&xx) {
                        acc += kj * s[xx as usize];
                    }
                }
                *o = acc;
            }
        });
        out
    };
    let vertical = |src: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (j, kj) in k.iter().enumerate() {
                let yy = y as i64 + j as i64 - radius;
                if !(0..h as i64).contains(&yy) {
                    continue;
                }
                let s = &src[yy as usize * w..(yy as usize + 1) * w];
                for (o, v) in row.iter_mut().zip(s) {
                    *o += kj * v;
                }
            }
        });
        out
    };

    let num = vertical(&horizontal(&weighted));
    let den = vertical(&horizontal(&mask));
    Ok(num
        .iter()
        .zip(&den)
        .zip(map.valid())
        .map(|((n, d), &ok)| if ok && *d > 0.0 { n / d } else { 0.0 })
        .collect())
}

/// High-pass residual estimate: `disp - blur(disp, sigma)` on valid pixels.
pub fn lpf_residual_estimate(disp: &DisparityMap, sigma: f64) -> Result<ResidualField> {
    let blurred = masked_gaussian_blur(disp, sigma)?;
    let values = disp
        .values()
        .iter()
        .zip(&blurred)
        .zip(disp.valid())
        .map(|((v, b), &ok)| if ok { v - b } else { 0.0 })
        .collect();
    ResidualField::new(disp.width(), disp.height(), values, disp.valid().to_vec())
}

/// All-zero estimate with the input's mask ("no correction").
pub fn null_residual_estimate(disp: &DisparityMap) -> ResidualField {
    ResidualField::zeros_like(disp)
}

/// Loads an externally produced residual estimate (`DSPF`, optional `DSPM`).
pub fn import_residual_estimate(path: &Path) -> Result<ResidualField> {
    crate::io::read_residual(path)
}

/// `disp - estimate` on jointly valid pixels.
pub fn apply_correction(disp: &DisparityMap, estimate: &ResidualField) -> Result<DisparityMap> {
    check_same_shape(disp.shape(), estimate.shape(), "apply_correction")?;
    let (values, valid): (Vec<f64>, Vec<bool>) = disp
        .values()
        .iter()
        .zip(disp.valid())
        .zip(estimate.values().iter().zip(estimate.valid()))
        .map(|((&d, &dok), (&e, &eok))| {
            if dok && eok {
                (d - e, true)
            } else {
                (0.0, false)
            }
        })
        .unzip();
    DisparityMap::new(disp.width(), disp.height(), values, valid)
}

/// Estimator selection as written on the command line:
/// `none`, `lpf`, or `import:<path>`.
///
/// An import path may contain `{id}`, replaced by the pair id when the
/// estimator is evaluated over several pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorSpec {
    None,
    Lpf,
    Import(PathBuf),
}

impl EstimatorSpec {
    /// Short method label used in reports.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::None => "none".into(),
            EstimatorSpec::Lpf => "lpf".into(),
            EstimatorSpec::Import(p) => format!(
                "import:{}",
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("estimate")
            ),
        }
    }

    /// Import path for pair `id`, with `{id}` substituted.
    pub fn import_path(&self, id: u64) -> Option<PathBuf> {
        match self {
            EstimatorSpec::Import(p) => Some(PathBuf::from(
                p.to_string_lossy().replace("{id}", &id.to_string()),
            )),
            _ => None,
        }
    }

    /// Runs the estimator on `disp`. Imported estimates must match its shape.
    pub fn estimate(&self, disp: &DisparityMap, sigma: f64, id: u64) -> Result<ResidualField> {
        match self {
            EstimatorSpec::None => Ok(null_residual_estimate(disp)),
            EstimatorSpec::Lpf => lpf_residual_estimate(disp, sigma),
            EstimatorSpec::Import(_) => {
                let path = self.import_path(id).expect("import variant");
                let est = import_residual_estimate(&path)?;
                if est.shape() != disp.shape() {
                    return Err(Error::contract(format!(
                        "pair {id}: imported estimate {} is {}x{}, disparity map is {}x{}",
                        path.display(),
                        est.width(),
                        est.height(),
                        disp.width(),
                        disp.height()
                    )));
                }
                Ok(est)
            }
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::None => f.write_str("none"),
            EstimatorSpec::Lpf => f.write_str("lpf"),
            EstimatorSpec::Import(p) => write!(f, "import:{}", p.display()),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EstimatorSpec::None),
            "lpf" => Ok(EstimatorSpec::Lpf),
            _ => match s.strip_prefix("import:") {
                Some(p) if !p.is_empty() => Ok(EstimatorSpec::Import(PathBuf::from(p))),
                _ => Err(Error::contract(format!(
                    "unknown estimator {s:?} (expected none, lpf or import:<path>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for EstimatorSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorSpec> for String {
    fn from(e: EstimatorSpec) -> String {
        e.to_string()
    }
}
