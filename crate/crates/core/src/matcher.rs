//! Sub-pixel 1D stereo matcher along the image y axis.
//!
//! For every interior pixel the left window is compared with right windows at
//! integer offsets `search_center - search_half_range ..= search_center +
//! search_half_range` using zero-mean normalized cross-correlation (ZNCC).
//! The best integer offset is refined by fitting a parabola through the
//! scores at the peak and its two neighbours.
//!
//! The disparity convention matches [`crate::synth::warp_by_disparity`]:
//! `left(x, y) ~ right(x, y + d)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_same_shape, DisparityMap, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubpixelMode {
    Parabola,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// Window half-size; the window is `(2 * window_half + 1)^2` pixels.
    pub window_half: usize,
    pub search_center: i64,
    pub search_half_range: usize,
    /// Windows whose DN standard deviation falls below this are not matched.
    pub min_valid_std: f64,
    pub subpixel: SubpixelMode,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            window_half: 7,
            search_center: 97,
            search_half_range: 3,
            min_valid_std: 1e-6,
            subpixel: SubpixelMode::Parabola,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_half < 2 {
            return Err(Error::contract("window_half must be >= 2"));
        }
        if self.search_half_range < 1 {
            return Err(Error::contract("search_half_range must be >= 1"));
        }
        if !(self.min_valid_std >= 0.0) {
            return Err(Error::contract("min_valid_std must be non-negative"));
        }
        Ok(())
    }
}

/// Parabola-vertex offset through `(-1, c_minus), (0, c_0), (1, c_plus)`,
/// clamped to `[-0.5, 0.5]`. A flat triple yields 0.
pub fn refine_subpixel(c_minus: f64, c_0: f64, c_plus: f64) -> Result<f64> {
    if c_0 < c_minus || c_0 < c_plus {
        return Err(Error::contract(format!(
            "peak not at centre of triple ({c_minus}, {c_0}, {c_plus})"
        )));
    }
    let denom = 2.0 * (c_minus - 2.0 * c_0 + c_plus);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((c_minus - c_plus) / denom).clamp(-0.5, 0.5))
}

/// Counts describing which pixels a matching run could not resolve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSummary {
    /// Pixels whose window fits inside both images for every search offset.
    pub interior: usize,
    /// Interior pixels rejected for lack of texture.
    pub low_texture: usize,
    /// Interior pixels whose best score sits at the search boundary.
    pub boundary_peak: usize,
}

impl MatchSummary {
    /// Fraction of interior pixels left invalid.
    pub fn invalid_fraction(&self) -> f64 {
        if self.interior == 0 {
            return 1.0;
        }
        (self.low_texture + self.boundary_peak) as f64 / self.interior as f64
    }
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub map: DisparityMap,
    pub summary: MatchSummary,
}

/// Window means and standard deviations of an image, computed with direct
/// (non-sliding) sums so every window is evaluated in the same order.
struct WindowStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn window_stats(pix: &[f64], w: usize, h: usize, half: usize) -> WindowStats {
    let n = ((2 * half + 1) * (2 * half + 1)) as f64;
    let mut mean = vec![f64::NAN; w * h];
    let mut std = vec![f64::NAN; w * h];
    mean.par_chunks_mut(w)
        .zip(std.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (mrow, srow))| {
            if y < half || y + half >= h {
                return;
            }
            let mut col_s = vec![0.0; w];
            let mut col_ss = vec![0.0; w];
            for yy in y - half..=y + half {
                let row = &pix[yy * w..(yy + 1) * w];
                for x in 0..w {
                    col_s[x] += row[x];
                    col_ss[x] += row[x] * row[x];
                }
            }
            for x in half..w.saturating_sub(half) {
                let mut s = 0.0;
                let mut ss = 0.0;
                for xx in x - half..=x + half {
                    s += col_s[xx];
                    ss += col_ss[xx];
                }
                let m = s / n;
                mrow[x] = m;
                srow[x] = (ss / n - m * m).max(0.0).sqrt();
            }
        });
    WindowStats { mean, std }
}

/// Dense disparity map; see [`match_disparity_detailed`].
pub fn match_disparity(
    left: &ImageGrid,
    right: &ImageGrid,
    cfg: &MatcherConfig,
) -> Result<DisparityMap> {
    Ok(match_disparity_detailed(left, right, cfg)?.map)
}

/// Dense ZNCC matching with parabola refinement.
///
/// Pixels whose window leaves either image for some search offset form the
/// declared border margin and are invalid. Interior pixels are additionally
/// rejected when a window's standard deviation is below `min_valid_std` or
/// when the best integer score lies at the edge of the search range.
pub fn match_disparity_detailed(
    left: &ImageGrid,
    right: &ImageGrid,
    cfg: &MatcherConfig,
) -> Result<MatchOutcome> {
    check_same_shape(left.shape(), right.shape(), "match_disparity")?;
    cfg.validate()?;
    let (w, h) = left.shape();
    let half = cfg.window_half;
    let range = cfg.search_half_range as i64;
    let d_min = cfg.search_center - range;
    let d_max = cfg.search_center + range;
    let n_off = (2 * range + 1) as usize;
    let win_n = ((2 * half + 1) * (2 * half + 1)) as f64;

    // ZNCC is invariant to a common offset; centring keeps the products small.
    let centre = 0.5 * (left.stats().mean + right.stats().mean);
    let lpix: Vec<f64> = left.pixels().iter().map(|v| v - centre).collect();
    let rpix: Vec<f64> = right.pixels().iter().map(|v| v - centre).collect();
    let lstat = window_stats(&lpix, w, h, half);
    let rstat = window_stats(&rpix, w, h, half);

    // Rows whose window stays inside the right image for every offset.
    let half_i = half as i64;
    let y_lo = half_i.max(half_i - d_min).max(0);
    let y_hi = (h as i64 - 1 - half_i).min(h as i64 - 1 - half_i - d_max);
    let x_lo = half;
    let x_hi = w as i64 - 1 - half_i;

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    let rows: Vec<MatchSummary> = values
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .map(|(y, (vrow, okrow))| {
            let mut summary = MatchSummary::default();
            let yi = y as i64;
            if yi < y_lo || yi > y_hi || x_hi < x_lo as i64 {
                return summary;
            }
            let x_hi = x_hi as usize;
            // scores[k * w + x] for offset d_min + k
            let mut scores = vec![f64::NEG_INFINITY; n_off * w];
            let mut col = vec![0.0; w];
            for k in 0..n_off {
                let d = d_min + k as i64;
                let ry = (yi + d) as usize;
                col.iter_mut().for_each(|c| *c = 0.0);
                for dy in 0..=2 * half {
                    let lrow = &lpix[(y - half + dy) * w..][..w];
                    let rrow = &rpix[(ry - half + dy) * w..][..w];
                    for x in 0..w {
                        col[x] += lrow[x] * rrow[x];
                    }
                }
                for x in x_lo..=x_hi {
                    let sl = lstat.std[y * w + x];
                    let sr = rstat.std[ry * w + x];
                    if sl < cfg.min_valid_std || sr < cfg.min_valid_std || sl == 0.0 || sr == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for c in &col[x - half..=x + half] {
                        s += c;
                    }
                    let cov = s / win_n - lstat.mean[y * w + x] * rstat.mean[ry * w + x];
                    scores[k * w + x] = cov / (sl * sr);
                }
            }
            for x in x_lo..=x_hi {
                summary.interior += 1;
                let mut best_k = usize::MAX;
                let mut best = f64::NEG_INFINITY;
                for k in 0..n_off {
                    let s = scores[k * w + x];
                    if s > best {
                        best = s;
                        best_k = k;
                    }
                }
                if best_k == usize::MAX || lstat.std[y * w + x] < cfg.min_valid_std {
                    summary.low_texture += 1;
                    continue;
                }
                if best_k == 0 || best_k == n_off - 1 {
                    summary.boundary_peak += 1;
                    continue;
                }
                let frac = match cfg.subpixel {
                    SubpixelMode::None => 0.0,
                    SubpixelMode::Parabola => {
                        let cm = scores[(best_k - 1) * w + x];
                        let cp = scores[(best_k + 1) * w + x];
                        if !cm.is_finite() || !cp.is_finite() {
                            summary.low_texture += 1;
                            continue;
                        }
                        refine_subpixel(cm, best, cp).expect("argmax is the peak")
                    }
                };
                vrow[x] = (d_min + best_k as i64) as f64 + frac;
                okrow[x] = true;
            }
            summary
        })
        .collect();

    let summary = rows
        .iter()
        .fold(MatchSummary::default(), |a, r| MatchSummary {
            interior: a.interior + r.interior,
            low_texture: a.low_texture + r.low_texture,
            boundary_peak: a.boundary_peak + r.boundary_peak,
        });
    Ok(MatchOutcome {
        map: DisparityMap::new(w, h, values, valid)?,
        summary,
    })
}
