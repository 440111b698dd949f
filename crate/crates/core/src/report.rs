//! Experiment reports and their CSV / JSON / SVG renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::denoiser::EstimatorSpec;
use crate::error::{Error, Result};
use crate::raster::DisparityMap;
use crate::residual::AgreementMetrics;
use crate::stats::SummaryStats;

/// One brightness level of the noise sweep. Disparity statistics are of the
/// residual against the ground-truth shift, in pixels and in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub scale: f64,
    pub image_mean_dn: f64,
    pub image_std_dn: f64,
    pub compressed: SummaryStats,
    pub uncompressed: SummaryStats,
    pub compressed_m: SummaryStats,
    pub uncompressed_m: SummaryStats,
    pub compressed_invalid_fraction: f64,
    pub uncompressed_invalid_fraction: f64,
    pub degenerate: bool,
}

/// Agreement of one estimator on one pair. `r`/`r2` are `None` for the
/// null estimator, whose constant output has no defined correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub id: u64,
    pub method: String,
    pub mean: f64,
    pub sd: f64,
    pub r: Option<f64>,
    pub r2: Option<f64>,
}

impl MethodRow {
    pub fn new(id: u64, spec: &EstimatorSpec, m: AgreementMetrics) -> Self {
        let null = matches!(spec, EstimatorSpec::None);
        MethodRow {
            id,
            method: spec.label(),
            mean: m.mean,
            sd: m.sd,
            r: if null { None } else { m.r },
            r2: if null { None } else { Some(m.r2) },
        }
    }
}

/// Pooled agreement of one estimator over all pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub method: String,
    pub r: Option<f64>,
    pub r2: Option<f64>,
}

impl OverallRow {
    pub fn new(spec: &EstimatorSpec, m: AgreementMetrics) -> Self {
        let null = matches!(spec, EstimatorSpec::None);
        OverallRow {
            method: spec.label(),
            r: if null { None } else { m.r },
            r2: if null { None } else { Some(m.r2) },
        }
    }
}

/// Prediction-versus-truth samples for a scatter plot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub method: String,
    /// `(estimate, truth)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl ScatterSeries {
    /// Keeps every `ceil(n / max)`-th sample.
    pub fn subsample(method: String, samples: &[(f64, f64)], max: usize) -> Self {
        let stride = samples.len().div_ceil(max.max(1)).max(1);
        ScatterSeries {
            method,
            points: samples.iter().step_by(stride).copied().collect(),
        }
    }
}

/// Disparity along one image column, compressed versus uncompressed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityProfile {
    pub scale: f64,
    pub column: usize,
    /// `(row, compressed, uncompressed)` where both are valid.
    pub samples: Vec<(usize, f64, f64)>,
}

impl DisparityProfile {
    pub fn centre_column(
        scale: f64,
        compressed: &DisparityMap,
        uncompressed: &DisparityMap,
    ) -> Self {
        let column = compressed.width() / 2;
        let samples = (0..compressed.height())
            .filter_map(|y| Some((y, compressed.get(column, y)?, uncompressed.get(column, y)?)))
            .collect();
        DisparityProfile {
            scale,
            column,
            samples,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub noise_rows: Vec<NoiseRow>,
    pub method_rows: Vec<MethodRow>,
    pub overall_rows: Vec<OverallRow>,
    #[serde(skip)]
    pub scatter: Vec<ScatterSeries>,
    #[serde(skip)]
    pub profile: Option<DisparityProfile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(Error::contract(format!(
                "unknown report format {s:?} (expected csv, json or svg)"
            ))),
        }
    }
}

pub const NOISE_CSV: &str = "noise.csv";
pub const METHODS_CSV: &str = "methods.csv";
pub const OVERALL_CSV: &str = "overall.csv";
pub const REPORT_JSON: &str = "report.json";

pub const NOISE_CSV_HEADER: &str = "scale,image_mean_dn,image_std_dn,\
comp_min,comp_max,comp_mean,comp_std,unc_min,unc_max,unc_mean,unc_std,\
comp_min_m,comp_max_m,comp_mean_m,comp_std_m,unc_min_m,unc_max_m,unc_mean_m,unc_std_m,\
comp_invalid_fraction,unc_invalid_fraction,degenerate";

pub const OVERALL_CSV_HEADER: &str = "method,r,r2";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| x.to_string())
}

fn stats_cols(s: &SummaryStats) -> String {
    format!("{},{},{},{}", s.min, s.max, s.mean, s.std)
}

impl EvalReport {
    pub fn noise_csv(&self) -> String {
        let mut out = String::from(NOISE_CSV_HEADER);
        out.push('\n');
        for r in &self.noise_rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scale,
                r.image_mean_dn,
                r.image_std_dn,
                stats_cols(&r.compressed),
                stats_cols(&r.uncompressed),
                stats_cols(&r.compressed_m),
                stats_cols(&r.uncompressed_m),
                r.compressed_invalid_fraction,
                r.uncompressed_invalid_fraction,
                r.degenerate
            )
            .unwrap();
        }
        out
    }

    pub fn methods_csv(&self) -> String {
        let mut out = String::from(AgreementMetrics::CSV_HEADER);
        out.push('\n');
        for r in &self.method_rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.id,
                r.method,
                r.mean,
                r.sd,
                opt(r.r),
                opt(r.r2)
            )
            .unwrap();
        }
        out
    }

    pub fn overall_csv(&self) -> String {
        let mut out = String::from(OVERALL_CSV_HEADER);
        out.push('\n');
        for r in &self.overall_rows {
            writeln!(out, "{},{},{}", r.method, opt(r.r), opt(r.r2)).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn write_file(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes `report` into `dir` in the requested format and returns the files
/// written. CSV and SVG outputs for empty sections are skipped.
pub fn render_report(
    report: &EvalReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            if !report.noise_rows.is_empty() {
                written.push(write_file(dir.join(NOISE_CSV), &report.noise_csv())?);
            }
            if !report.method_rows.is_empty() {
                written.push(write_file(dir.join(METHODS_CSV), &report.methods_csv())?);
                written.push(write_file(dir.join(OVERALL_CSV), &report.overall_csv())?);
            }
        }
        ReportFormat::Json => {
            written.push(write_file(dir.join(REPORT_JSON), &report.to_json())?);
        }
        ReportFormat::Svg => {
            if !report.method_rows.is_empty() {
                for s in &report.scatter {
                    let name = format!("scatter_{}.svg", file_safe(&s.method));
                    written.push(write_file(dir.join(name), &scatter_svg(s))?);
                }
            }
            if let Some(p) = &report.profile {
                written.push(write_file(dir.join("profile.svg"), &profile_svg(p))?);
            }
        }
    }
    Ok(written)
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: -1.0, hi: 1.0 };
        }
        if hi - lo < 1e-12 {
            return Axis {
                lo: lo - 0.5,
                hi: hi + 0.5,
            };
        }
        Axis { lo, hi }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

fn svg_frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, x: &Axis, y: &Axis) {
    let total = SIZE + 2.0 * MARGIN;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#,
        total / 2.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        total / 2.0,
        total - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="15" y="{0}" text-anchor="middle" transform="rotate(-90 15 {0})">{ylabel}</text>"#,
        total / 2.0
    )
    .unwrap();
    let b = MARGIN + SIZE;
    writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" text-anchor="start">{:.4}</text>"#,
        b + 15.0,
        x.lo
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{b}" y="{}" text-anchor="end">{:.4}</text>"#,
        b + 15.0,
        x.hi
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{b}" text-anchor="end">{:.4}</text>"#,
        MARGIN - 4.0,
        y.lo
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#,
        MARGIN - 4.0,
        MARGIN + 10.0,
        y.hi
    )
    .unwrap();
}

/// Estimate on x, truth on y, with the identity line for reference.
pub fn scatter_svg(series: &ScatterSeries) -> String {
    let axis = Axis::fit(series.points.iter().flat_map(|&(e, t)| [e, t]));
    let mut out = String::new();
    svg_frame(
        &mut out,
        &format!("{}: estimate vs truth residual", series.method),
        "estimated residual [px]",
        "true residual [px]",
        &axis,
        &axis,
    );
    let (x0, x1) = (MARGIN, MARGIN + SIZE);
    let (y0, y1) = (MARGIN + SIZE, MARGIN);
    writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="grey" stroke-dasharray="4 4"/>"#
    )
    .unwrap();
    out.push_str(r#"<g fill="steelblue" fill-opacity="0.3">"#);
    out.push('\n');
    for &(e, t) in &series.points {
        writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1"/>"#,
            axis.map(e, x0, x1),
            axis.map(t, y0, y1)
        )
        .unwrap();
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Disparity along one column for the compressed and uncompressed pairs.
pub fn profile_svg(p: &DisparityProfile) -> String {
    let xa = Axis::fit(p.samples.iter().map(|s| s.0 as f64));
    let ya = Axis::fit(p.samples.iter().flat_map(|s| [s.1, s.2]));
    let mut out = String::new();
    svg_frame(
        &mut out,
        &format!("column {} at scale {}", p.column, p.scale),
        "y [px]",
        "disparity [px]",
        &xa,
        &ya,
    );
    let line = |pick: fn(&(usize, f64, f64)) -> f64| -> String {
        p.samples
            .iter()
            .map(|s| {
                format!(
                    "{:.2},{:.2}",
                    xa.map(s.0 as f64, MARGIN, MARGIN + SIZE),
                    ya.map(pick(s), MARGIN + SIZE, MARGIN)
                )
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(
        out,
        r##"<polyline fill="none" stroke="#1f77b4" points="{}"/>"##,
        line(|s| s.2)
    )
    .unwrap();
    writeln!(
        out,
        r##"<polyline fill="none" stroke="#ff7f0e" points="{}"/>"##,
        line(|s| s.1)
    )
    .unwrap();
    writeln!(
        out,
        r##"<text x="{}" y="{}" fill="#1f77b4">uncompressed</text><text x="{}" y="{}" fill="#ff7f0e">compressed</text>"##,
        MARGIN + 10.0,
        MARGIN + 20.0,
        MARGIN + 10.0,
        MARGIN + 36.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
