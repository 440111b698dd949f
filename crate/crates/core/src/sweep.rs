//! End-to-end experiments: the DN-scale noise sweep and the residual
//! estimator comparison.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{compress_image, QuantTable};
use crate::denoiser::{ElevationModel, EstimatorSpec, DEFAULT_SIGMA};
use crate::error::{Error, Result};
use crate::matcher::{match_disparity_detailed, MatchSummary, MatcherConfig};
use crate::raster::{DisparityMap, ImageGrid, ResidualField};
use crate::report::{DisparityProfile, EvalReport, MethodRow, NoiseRow, OverallRow, ScatterSeries};
use crate::residual::{agreement, agreement_from_pairs, disparity_residual};
use crate::synth::{
    derive_seed, generate_terrain, make_shifted_pair, scale_dn, warp_by_disparity, TerrainParams,
    DEFAULT_SHIFT_PX,
};

/// Invalid fraction above which a sweep row is flagged degenerate.
pub const DEGENERATE_INVALID_FRACTION: f64 = 0.2;

/// Upper bound on scatter points kept per estimator.
pub const MAX_SCATTER_POINTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub scales: Vec<f64>,
    pub terrain: TerrainParams,
    /// Built-in table name or path to a table file.
    pub table: String,
    pub matcher: MatcherConfig,
    pub shift_px: usize,
    pub estimators: Vec<EstimatorSpec>,
    /// Gaussian sigma of the `lpf` estimator.
    pub sigma: f64,
    /// Number of stereo pairs in the estimator evaluation corpus.
    pub pairs: usize,
    /// Mean DN of the evaluation corpus; each pair is scaled to it.
    pub eval_mean_dn: f64,
    pub elevation: ElevationModel,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            scales: vec![1.0, 0.75, 0.5, 0.25, 0.1, 0.05],
            terrain: TerrainParams::default(),
            table: "SF008S_A".into(),
            matcher: MatcherConfig::default(),
            shift_px: DEFAULT_SHIFT_PX,
            estimators: vec![EstimatorSpec::None, EstimatorSpec::Lpf],
            sigma: DEFAULT_SIGMA,
            pairs: 3,
            eval_mean_dn: 200.0,
            elevation: ElevationModel::default(),
        }
    }
}

impl SweepConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::contract("scales must not be empty"));
        }
        if let Some(s) = self.scales.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::contract(format!("scale {s} outside (0, 1]")));
        }
        self.terrain.validate()?;
        self.matcher.validate()?;
        if !(self.sigma > 0.0) {
            return Err(Error::contract("sigma must be positive"));
        }
        if !(self.eval_mean_dn > 0.0) {
            return Err(Error::contract("eval_mean_dn must be positive"));
        }
        ElevationModel::new(self.elevation.meters_per_pixel_disparity)?;
        Ok(())
    }

    pub fn quant_table(&self) -> Result<QuantTable> {
        QuantTable::resolve(&self.table)
    }
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::contract(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

struct ScaleResult {
    row: NoiseRow,
    profile: DisparityProfile,
}

fn fraction_invalid(s: &MatchSummary) -> f64 {
    s.invalid_fraction()
}

/// Compressed versus uncompressed disparity error across DN scales.
///
/// One terrain image is generated from `cfg.terrain` and rescaled for every
/// row, so rows differ only in brightness. Residuals are taken against the
/// constant ground-truth shift.
pub fn run_noise_sweep(cfg: &SweepConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let table = cfg.quant_table()?;
    let base = generate_terrain(&cfg.terrain)?;
    let mut matcher = cfg.matcher.clone();
    matcher.search_center = cfg.shift_px as i64;

    let mut results = cfg
        .scales
        .par_iter()
        .map(|&scale| -> Result<ScaleResult> {
            let img = scale_dn(&base, scale)?;
            let img_stats = img.stats();
            let pair = make_shifted_pair(&img, cfg.shift_px)?;
            let unc = match_disparity_detailed(&pair.left, &pair.right, &matcher)?;
            let cl = compress_image(&pair.left, &table);
            let cr = compress_image(&pair.right, &table);
            let comp = match_disparity_detailed(&cl, &cr, &matcher)?;
            let comp_res = disparity_residual(&comp.map, &pair.truth)?;
            let unc_res = disparity_residual(&unc.map, &pair.truth)?;
            let k = cfg.elevation.meters_per_pixel_disparity;
            let comp_invalid = fraction_invalid(&comp.summary);
            let unc_invalid = fraction_invalid(&unc.summary);
            Ok(ScaleResult {
                row: NoiseRow {
                    scale,
                    image_mean_dn: img_stats.mean,
                    image_std_dn: img_stats.std,
                    compressed: *comp_res.stats(),
                    uncompressed: *unc_res.stats(),
                    compressed_m: comp_res.stats().scaled(k),
                    uncompressed_m: unc_res.stats().scaled(k),
                    compressed_invalid_fraction: comp_invalid,
                    uncompressed_invalid_fraction: unc_invalid,
                    degenerate: comp_invalid > DEGENERATE_INVALID_FRACTION
                        || unc_invalid > DEGENERATE_INVALID_FRACTION,
                },
                profile: DisparityProfile::centre_column(scale, &comp.map, &unc.map),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    results.sort_by(|a, b| a.row.scale.total_cmp(&b.row.scale));
    for r in results.iter().filter(|r| r.row.degenerate) {
        log::warn!(
            "scale {}: matcher left more than {:.0}% of interior pixels invalid",
            r.row.scale,
            100.0 * DEGENERATE_INVALID_FRACTION
        );
    }
    // The darkest scale shows the compression noise most clearly.
    let profile = results.first().map(|r| r.profile.clone());
    Ok(EvalReport {
        noise_rows: results.into_iter().map(|r| r.row).collect(),
        profile,
        ..EvalReport::default()
    })
}

/// Everything computed for one evaluation pair.
#[derive(Debug, Clone)]
pub struct PairProducts {
    pub id: u64,
    /// Compressed left image.
    pub left: ImageGrid,
    /// Compressed right image rectified by the compressed-pair disparity.
    pub right_rectified: ImageGrid,
    pub compressed_disparity: DisparityMap,
    pub uncompressed_disparity: DisparityMap,
    /// Compressed-pair disparity minus uncompressed-pair disparity.
    pub truth: ResidualField,
}

/// Builds the evaluation corpus: `cfg.pairs` independent terrains, each scaled
/// to `cfg.eval_mean_dn` and matched with and without compression.
pub fn build_eval_pairs(cfg: &SweepConfig) -> Result<Vec<PairProducts>> {
    cfg.validate()?;
    let table = cfg.quant_table()?;
    let mut matcher = cfg.matcher.clone();
    matcher.search_center = cfg.shift_px as i64;
    (0..cfg.pairs as u64)
        .into_par_iter()
        .map(|id| {
            let params = TerrainParams {
                seed: derive_seed(cfg.terrain.seed, id),
                ..cfg.terrain.clone()
            };
            let img = generate_terrain(&params)?;
            let img = scale_dn(&img, cfg.eval_mean_dn / params.target_mean_dn)?;
            let pair = make_shifted_pair(&img, cfg.shift_px)?;
            let unc = match_disparity_detailed(&pair.left, &pair.right, &matcher)?.map;
            let cl = compress_image(&pair.left, &table);
            let cr = compress_image(&pair.right, &table);
            let comp = match_disparity_detailed(&cl, &cr, &matcher)?.map;
            let truth = disparity_residual(&comp, &unc)?;
            let warped = warp_by_disparity(&cr, &comp)?;
            Ok(PairProducts {
                id,
                left: cl,
                right_rectified: warped.image,
                compressed_disparity: comp,
                uncompressed_disparity: unc,
                truth,
            })
        })
        .collect()
}

/// Scores every estimator on every pair of the evaluation corpus.
pub fn run_estimator_eval(cfg: &SweepConfig) -> Result<EvalReport> {
    let pairs = build_eval_pairs(cfg)?;
    evaluate_estimators(cfg, &pairs)
}

/// Scores `cfg.estimators` against the true residuals of prepared pairs.
///
/// Per-pair rows use each pair's jointly valid pixels; the overall row pools
/// the valid pixels of all pairs.
pub fn evaluate_estimators(cfg: &SweepConfig, pairs: &[PairProducts]) -> Result<EvalReport> {
    if cfg.estimators.is_empty() {
        return Err(Error::contract("at least one estimator is required"));
    }
    let mut report = EvalReport::default();
    for spec in &cfg.estimators {
        let estimates = pairs
            .iter()
            .map(|p| spec.estimate(&p.compressed_disparity, cfg.sigma, p.id))
            .collect::<Result<Vec<_>>>()?;

        for (p, est) in pairs.iter().zip(&estimates) {
            let m = agreement(est, &p.truth)?;
            report.method_rows.push(MethodRow::new(p.id, spec, m));
        }

        let mut pooled: Vec<(f64, f64)> = Vec::new();
        for (p, est) in pairs.iter().zip(&estimates) {
            for i in 0..est.values().len() {
                if est.valid()[i] && p.truth.valid()[i] {
                    pooled.push((est.values()[i], p.truth.values()[i]));
                }
            }
        }
        let m = agreement_from_pairs(pooled.iter().copied())?;
        report.overall_rows.push(OverallRow::new(spec, m));
        if !matches!(spec, EstimatorSpec::None) {
            report.scatter.push(ScatterSeries::subsample(
                spec.label(),
                &pooled,
                MAX_SCATTER_POINTS,
            ));
        }
    }
    Ok(report)
}
