//! Disparity residuals, agreement metrics and Gaussianity diagnostics.
//!
//! Agreement between an estimated residual and the true residual is reported
//! as four numbers:
//!
//! * `mean`, `sd`: statistics of `truth - estimate`, the error left after the
//!   estimate is subtracted. With a zero estimate they equal the raw residual
//!   statistics.
//! * `r`: Pearson correlation of estimate and truth. Undefined (`None`) when
//!   the estimate is constant.
//! * `r2`: coefficient of determination in score form,
//!   `1 - SS_res / SS_tot`. It is not `r^2` and goes negative when the
//!   estimate is worse than predicting the mean of the truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{check_same_shape, DisparityMap, ResidualField};
use crate::stats::{NeumaierSum, SummaryStats};

/// `d_test - d_truth` on the pixels valid in both maps.
pub fn disparity_residual(d_test: &DisparityMap, d_truth: &DisparityMap) -> Result<ResidualField> {
    check_same_shape(d_test.shape(), d_truth.shape(), "disparity_residual")?;
    let (values, valid): (Vec<f64>, Vec<bool>) = d_test
        .values()
        .iter()
        .zip(d_test.valid())
        .zip(d_truth.values().iter().zip(d_truth.valid()))
        .map(|((&t, &tok), (&g, &gok))| {
            if tok && gok {
                (t - g, true)
            } else {
                (0.0, false)
            }
        })
        .unzip();
    ResidualField::new(d_test.width(), d_test.height(), values, valid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementMetrics {
    pub mean: f64,
    pub sd: f64,
    pub r: Option<f64>,
    pub r2: f64,
}

impl AgreementMetrics {
    pub const CSV_HEADER: &'static str = "id,method,mean,sd,r,r2";
}

/// Agreement of an estimated residual with the true residual over their
/// jointly valid pixels.
pub fn agreement(estimate: &ResidualField, truth: &ResidualField) -> Result<AgreementMetrics> {
    check_same_shape(estimate.shape(), truth.shape(), "agreement")?;
    let pairs = estimate
        .values()
        .iter()
        .zip(estimate.valid())
        .zip(truth.values().iter().zip(truth.valid()))
        .filter(|((_, &eok), (_, &tok))| eok && tok)
        .map(|((&e, _), (&t, _))| (e, t));
    agreement_from_pairs(pairs)
}

/// Agreement over an explicit sequence of `(estimate, truth)` samples, used
/// for pooled metrics across several maps.
pub fn agreement_from_pairs<I>(pairs: I) -> Result<AgreementMetrics>
where
    I: IntoIterator<Item = (f64, f64)>,
    I::IntoIter: Clone,
{
    let pairs = pairs.into_iter();
    let mut n = 0usize;
    let mut se = NeumaierSum::new();
    let mut st = NeumaierSum::new();
    for (e, t) in pairs.clone() {
        se.add(e);
        st.add(t);
        n += 1;
    }
    if n < 2 {
        return Err(Error::contract(format!(
            "agreement needs at least 2 jointly valid pixels, got {n}"
        )));
    }
    let me = se.value() / n as f64;
    let mt = st.value() / n as f64;

    let mut see = NeumaierSum::new();
    let mut stt = NeumaierSum::new();
    let mut set = NeumaierSum::new();
    let mut sres = NeumaierSum::new();
    for (e, t) in pairs.clone() {
        let de = e - me;
        let dt = t - mt;
        see.add(de * de);
        stt.add(dt * dt);
        set.add(de * dt);
        sres.add((t - e) * (t - e));
    }
    if stt.value() == 0.0 {
        return Err(Error::contract(
            "truth residual is constant; correlation is undefined",
        ));
    }
    let r = if see.value() == 0.0 {
        None
    } else {
        Some((set.value() / (see.value() * stt.value()).sqrt()).clamp(-1.0, 1.0))
    };
    let r2 = 1.0 - sres.value() / stt.value();
    let err = SummaryStats::from_values(pairs.map(|(e, t)| t - e));
    Ok(AgreementMetrics {
        mean: err.mean,
        sd: err.std,
        r,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// `|skewness| < 0.2` and `|excess_kurtosis| < 0.5`. A descriptive flag,
    /// not a hypothesis test.
    pub consistent_with_gaussian: bool,
}

pub const SKEWNESS_LIMIT: f64 = 0.2;
pub const KURTOSIS_LIMIT: f64 = 0.5;

/// Standardized third and fourth moments of the valid residual values.
pub fn normality_diagnostics(field: &ResidualField) -> Result<NormalityDiagnostics> {
    let stats = field.stats();
    if stats.count < 100 {
        return Err(Error::contract(format!(
            "normality diagnostics need at least 100 samples, got {}",
            stats.count
        )));
    }
    if !(stats.std > 0.0) {
        return Err(Error::contract("residual has zero standard deviation"));
    }
    let mut m3 = NeumaierSum::new();
    let mut m4 = NeumaierSum::new();
    for (&v, _) in field
        .values()
        .iter()
        .zip(field.valid())
        .filter(|(_, &ok)| ok)
    {
        let z = (v - stats.mean) / stats.std;
        let z2 = z * z;
        m3.add(z2 * z);
        m4.add(z2 * z2);
    }
    let n = stats.count as f64;
    let skewness = m3.value() / n;
    let excess_kurtosis = m4.value() / n - 3.0;
    Ok(NormalityDiagnostics {
        skewness,
        excess_kurtosis,
        consistent_with_gaussian: skewness.abs() < SKEWNESS_LIMIT
            && excess_kurtosis.abs() < KURTOSIS_LIMIT,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(values: Vec<f64>) -> ResidualField {
        let n = values.len();
        ResidualField::new(n, 1, values, vec![true; n]).unwrap()
    }

    #[test]
    fn residual_of_equal_maps_is_zero() {
        let d = DisparityMap::constant(4, 4, 97.0);
        let r = disparity_residual(&d, &d).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
        assert_eq!(r.stats().std, 0.0);
    }

    #[test]
    fn constant_offset_residual() {
        let t = DisparityMap::constant(4, 4, 97.05);
        let g = DisparityMap::constant(4, 4, 97.0);
        let r = disparity_residual(&t, &g).unwrap();
        assert!((r.stats().mean - 0.05).abs() < 1e-12);
        assert_eq!(r.stats().std, 0.0);
    }

    #[test]
    fn residual_uses_joint_mask() {
        let mut va = vec![true; 4];
        va[0] = false;
        let mut vb = vec![true; 4];
        vb[3] = false;
        let a = DisparityMap::new(2, 2, vec![1.0; 4], va).unwrap();
        let b = DisparityMap::new(2, 2, vec![0.0; 4], vb).unwrap();
        let r = disparity_residual(&a, &b).unwrap();
        assert_eq!(r.valid(), &[false, true, true, false]);
        assert_eq!(r.stats().count, 2);
    }

    #[test]
    fn residual_shape_mismatch() {
        let a = DisparityMap::constant(4, 4, 0.0);
        let b = DisparityMap::constant(4, 5, 0.0);
        assert!(matches!(
            disparity_residual(&a, &b),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn self_agreement_is_perfect() {
        let x = field(vec![0.1, -0.3, 0.2, 0.05, -0.02]);
        let m = agreement(&x, &x).unwrap();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.sd, 0.0);
        assert!((m.r.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.r2, 1.0);
    }

    #[test]
    fn zero_estimate_has_no_correlation() {
        let truth = field(vec![0.1, -0.1, 0.2, -0.2]);
        let zero = field(vec![0.0; 4]);
        let m = agreement(&zero, &truth).unwrap();
        assert!(m.r.is_none());
        assert!(m.r2 <= 0.0);
        assert_eq!(m.mean, truth.stats().mean);
        assert_eq!(m.sd, truth.stats().std);
    }

    #[test]
    fn constant_truth_is_an_error() {
        let truth = field(vec![1.0; 4]);
        let est = field(vec![0.0, 1.0, 2.0, 3.0]);
        assert!(matches!(agreement(&est, &truth), Err(Error::Contract(_))));
        let one = field(vec![1.0]);
        assert!(agreement(&one, &one).is_err());
    }

    #[test]
    fn uniform_draws_fail_gaussian_check() {
        let n = 100_000;
        let values: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = normality_diagnostics(&field(values)).unwrap();
        assert!((d.excess_kurtosis + 1.2).abs() < 1e-3);
        assert!(d.skewness.abs() < 1e-9);
        assert!(!d.consistent_with_gaussian);
    }

    #[test]
    fn diagnostics_preconditions() {
        assert!(normality_diagnostics(&field(vec![1.0; 50])).is_err());
        assert!(normality_diagnostics(&field(vec![1.0; 200])).is_err());
    }
}
