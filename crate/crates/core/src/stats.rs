//! Summary statistics with a fixed, compensated summation order.
//!
//! Every reduction in the crate funnels through [`NeumaierSum`] and walks its
//! input in row-major order, so results never depend on thread count.

use serde::{Deserialize, Serialize};

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// min / max / mean / population standard deviation of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl SummaryStats {
    /// Two-pass statistics. The standard deviation divides by `count`.
    ///
    /// An empty sample yields NaN moments and a zero count.
    pub fn from_values<I>(values: I) -> Self
    where
        I: IntoIterator<Item = f64>,
        I::IntoIter: Clone,
    {
        let iter = values.into_iter();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = NeumaierSum::new();
        let mut count = 0usize;
        for v in iter.clone() {
            min = min.min(v);
            max = max.max(v);
            sum.add(v);
            count += 1;
        }
        if count == 0 {
            return SummaryStats {
                min: f64::NAN,
                max: f64::NAN,
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let mean = sum.value() / count as f64;
        let ss: NeumaierSum = iter.map(|v| (v - mean) * (v - mean)).collect();
        // Compensated mean can land a hair outside [min, max] for constant input.
        let mean = mean.clamp(min, max);
        SummaryStats {
            min,
            max,
            mean,
            std: (ss.value() / count as f64).sqrt(),
            count,
        }
    }

    /// Statistics over the entries of `values` whose mask bit is set.
    pub fn masked(values: &[f64], valid: &[bool]) -> Self {
        debug_assert_eq!(values.len(), valid.len());
        Self::from_values(
            values
                .iter()
                .zip(valid)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| v),
        )
    }

    pub const CSV_HEADER: &'static str = "min,max,mean,std,count";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.min, self.max, self.mean, self.std, self.count
        )
    }

    /// The same statistics with every length-valued field multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let (min, max) = if k >= 0.0 {
            (self.min * k, self.max * k)
        } else {
            (self.max * k, self.min * k)
        };
        SummaryStats {
            min,
            max,
            mean: self.mean * k,
            std: self.std * k.abs(),
            count: self.count,
        }
    }
}
