//! Univariate Gaussian-kernel density estimates.

use crate::error::{Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};

/// Lower and upper clamp applied to every cdf value handed to a copula.
pub const CDF_EPS: f64 = 1e-6;

/// Kernel offsets beyond this many bandwidths contribute 0 or 1 to the cdf
/// to within double precision.
const CDF_CUTOFF: f64 = 9.0;

/// Gaussian-kernel density estimate of one variable.
///
/// Samples are kept sorted so that cdf evaluation only visits kernels that
/// are not saturated at `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeMarginal {
    samples: Vec<f64>,
    bandwidth: f64,
}

/// Silverman's rule of thumb, `1.06 σ̂ M^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    1.06 * var.sqrt() * m.powf(-0.2)
}

/// Fits a KDE to the observed values of one column.
pub fn fit_kde(values: &[f64], bandwidth_override: Option<f64>) -> Result<KdeMarginal> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in KDE input".into()));
    }
    if values.len() < 2 {
        return Err(Error::DegenerateInput("a single observed value".into()));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateInput("all values identical".into()));
    }
    let bandwidth = match bandwidth_override {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => silverman_bandwidth(values),
    };
    KdeMarginal::new(values.to_vec(), bandwidth)
}

impl KdeMarginal {
    pub fn new(mut samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite KDE sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, bandwidth })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support_lo(&self) -> f64 {
        self.samples[0] - 5.0 * self.bandwidth
    }

    pub fn support_hi(&self) -> f64 {
        self.samples[self.samples.len() - 1] + 5.0 * self.bandwidth
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|&s| normal::pdf((x - s) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }

    /// Natural log of the density, evaluated with log-sum-exp so that points
    /// far outside the sample range stay finite.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        // nearest sample gives the dominant kernel
        let idx = self.samples.partition_point(|&s| s < x);
        let mut best = f64::INFINITY;
        for j in [idx.wrapping_sub(1), idx] {
            if let Some(&s) = self.samples.get(j) {
                best = best.min(((x - s) / h).abs());
            }
        }
        let peak = -0.5 * best * best;
        let sum: f64 = self
            .samples
            .iter()
            .map(|&s| {
                let t = (x - s) / h;
                (-0.5 * t * t - peak).exp()
            })
            .sum();
        peak + sum.ln() - (self.samples.len() as f64 * h).ln() - normal::LN_SQRT_2PI
    }

    /// Smoothed cdf `(1/M) Σ Φ((x − xᵢ)/h)` without clamping.
    pub fn raw_cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.samples.partition_point(|&s| s < x - CDF_CUTOFF * h);
        let hi = self.samples.partition_point(|&s| s <= x + CDF_CUTOFF * h);
        // samples below `lo` are saturated at 1
        let window: f64 = self.samples[lo..hi]
            .iter()
            .map(|&s| normal::cdf((x - s) / h))
            .sum();
        (lo as f64 + window) / self.samples.len() as f64
    }

    /// Smoothed cdf clamped to `[CDF_EPS, 1 − CDF_EPS]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.raw_cdf(x).clamp(CDF_EPS, 1.0 - CDF_EPS)
    }

    /// Inverse of the smoothed cdf: safeguarded Newton steps inside a
    /// shrinking bisection bracket on `[support_lo, support_hi]`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::OutOfRange(u));
        }
        let (mut lo, mut hi) = (self.support_lo(), self.support_hi());
        if self.raw_cdf(lo) >= u {
            return Ok(lo);
        }
        if self.raw_cdf(hi) <= u {
            return Ok(hi);
        }
        let mut x = self.samples[(u * self.samples.len() as f64) as usize % self.samples.len()];
        for _ in 0..200 {
            let f = self.raw_cdf(x) - u;
            if f.abs() < 1e-12 {
                return Ok(x);
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                return Ok(0.5 * (lo + hi));
            }
            let d = self.pdf(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(x)
    }
}
