//! Uniform-correlation Gaussian copula.
//!
//! The correlation matrix is `Σ = (1 − ρ)I + ρJ`. Both its determinant and
//! its inverse have closed forms, so every quantity below depends on a
//! normal-score vector `z` only through `Σ z²` and `(Σ z)²`.

use crate::error::{Error, Result};
use crate::normal;
use crate::optimize::golden_section_max;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

/// Distance kept from each end of the positive-definite ρ interval.
pub const RHO_MARGIN: f64 = 1e-4;

/// Absolute tolerance of the ρ search.
pub const RHO_TOL: f64 = 1e-6;

/// Feasible ρ range for a copula of dimension `dim`.
pub fn rho_bounds(dim: usize) -> (f64, f64) {
    if dim < 2 {
        (0.0, 0.0)
    } else {
        (-1.0 / (dim as f64 - 1.0) + RHO_MARGIN, 1.0 - RHO_MARGIN)
    }
}

fn positive_definite(dim: usize, rho: f64) -> bool {
    dim <= 1 || (rho < 1.0 && rho > -1.0 / (dim as f64 - 1.0))
}

/// `log |(1 − ρ)I + ρJ|` for an `n × n` matrix.
pub fn uniform_sigma_logdet(n: usize, rho: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if n == 1 {
        return Ok(0.0);
    }
    if !positive_definite(n, rho) {
        return Err(Error::InvalidRho { dim: n, rho });
    }
    Ok(logdet_unchecked(n, rho))
}

fn logdet_unchecked(n: usize, rho: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = n as f64 - 1.0;
    m * (1.0 - rho).ln() + (1.0 + m * rho).ln()
}

/// `zᵀ Σ⁻¹ z` from `Σ z²` and `(Σ z)²`.
fn inverse_quadratic(n: usize, rho: f64, sum_sq: f64, sq_sum: f64) -> f64 {
    if n <= 1 {
        return sum_sq;
    }
    let shrink = rho / (1.0 + (n as f64 - 1.0) * rho);
    (sum_sq - shrink * sq_sum) / (1.0 - rho)
}

/// `log c(z)` written in terms of the two sufficient statistics.
fn log_density_stats(n: usize, rho: f64, sum_sq: f64, sq_sum: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    -0.5 * logdet_unchecked(n, rho) - 0.5 * (inverse_quadratic(n, rho, sum_sq, sq_sum) - sum_sq)
}

/// Dense inverse of `(1 − ρ)I + ρJ` from the closed form.
pub fn uniform_sigma_inverse(n: usize, rho: f64) -> Result<Vec<Vec<f64>>> {
    uniform_sigma_logdet(n, rho)?;
    if n == 1 {
        return Ok(vec![vec![1.0]]);
    }
    let shrink = rho / (1.0 + (n as f64 - 1.0) * rho);
    let scale = 1.0 / (1.0 - rho);
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| scale * (if i == j { 1.0 } else { 0.0 } - shrink))
                .collect()
        })
        .collect())
}

/// Uniform-correlation Gaussian copula of a given dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGaussianCopula {
    dim: usize,
    rho: f64,
}

impl UniformGaussianCopula {
    /// Rejects ρ outside the margin-shrunk positive-definite interval.
    pub fn new(dim: usize, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput(
                "copula dimension must be at least 1".into(),
            ));
        }
        if dim == 1 {
            if rho != 0.0 {
                return Err(Error::InvalidRho { dim, rho });
            }
            return Ok(Self { dim, rho });
        }
        let (lo, hi) = rho_bounds(dim);
        if !(rho >= lo && rho <= hi) {
            return Err(Error::InvalidRho { dim, rho });
        }
        Ok(Self { dim, rho })
    }

    pub fn independent(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            rho: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Log copula density at normal scores `z` (length `dim`).
    pub fn log_density_z(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.dim);
        let sum_sq: f64 = z.iter().map(|v| v * v).sum();
        let sum: f64 = z.iter().sum();
        log_density_stats(self.dim, self.rho, sum_sq, sum * sum)
    }

    /// Log copula density at a point of the open unit cube.
    pub fn copula_log_density(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.dim,
                u.len()
            )));
        }
        let z = to_scores(u)?;
        Ok(self.log_density_z(&z))
    }

    /// `log R`: the family copula density over the parents' marginal copula
    /// density, at normal scores. Parents share the family's ρ.
    pub fn ratio_log_z(&self, z_child: f64, z_parents: &[f64]) -> f64 {
        debug_assert_eq!(z_parents.len() + 1, self.dim);
        if z_parents.is_empty() {
            return 0.0;
        }
        let k = z_parents.len();
        let par_sq: f64 = z_parents.iter().map(|v| v * v).sum();
        let par_sum: f64 = z_parents.iter().sum();
        let all_sum = par_sum + z_child;
        log_density_stats(
            k + 1,
            self.rho,
            par_sq + z_child * z_child,
            all_sum * all_sum,
        ) - log_density_stats(k, self.rho, par_sq, par_sum * par_sum)
    }

    /// `log R` at unit-cube coordinates.
    pub fn ratio_log(&self, u_child: f64, u_parents: &[f64]) -> Result<f64> {
        if u_parents.len() + 1 != self.dim {
            return Err(Error::InvalidInput(format!(
                "a {}-dimensional family needs {} parents, got {}",
                self.dim,
                self.dim - 1,
                u_parents.len()
            )));
        }
        let zc = to_score(u_child)?;
        let zp = to_scores(u_parents)?;
        Ok(self.ratio_log_z(zc, &zp))
    }

    /// Mean and variance of the child's normal score given its parents'.
    pub fn conditional_z_params(&self, z_parents: &[f64]) -> Result<(f64, f64)> {
        if z_parents.len() + 1 != self.dim {
            return Err(Error::InvalidInput(format!(
                "a {}-dimensional family needs {} parents, got {}",
                self.dim,
                self.dim - 1,
                z_parents.len()
            )));
        }
        if !positive_definite(self.dim, self.rho) {
            return Err(Error::InvalidRho {
                dim: self.dim,
                rho: self.rho,
            });
        }
        let k = z_parents.len();
        if k == 0 {
            return Ok((0.0, 1.0));
        }
        // Σ_pa⁻¹ 1 = 1 / (1 + (k − 1)ρ), and Σ_{c,pa} = ρ 1ᵀ
        let gain = self.rho / (1.0 + (k as f64 - 1.0) * self.rho);
        let mean = gain * z_parents.iter().sum::<f64>();
        let variance = 1.0 - gain * self.rho * k as f64;
        Ok((mean, variance))
    }
}

pub(crate) fn to_score(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidInput(format!(
            "{u} is outside the open unit interval"
        )));
    }
    Ok(normal::quantile(u))
}

fn to_scores(u: &[f64]) -> Result<Vec<f64>> {
    u.iter().map(|&v| to_score(v)).collect()
}

/// Sufficient statistics of a family's `log R` terms, summed over instances
/// (or their expectations, for instances with hidden members).
///
/// `log R` is linear in these, so the objective for any ρ is an O(1)
/// evaluation once they are accumulated.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FamilyMoments {
    pub count: f64,
    /// Σ z² over the whole family.
    pub family_sum_sq: f64,
    /// (Σ z)² over the whole family.
    pub family_sq_sum: f64,
    /// Σ z² over the parents.
    pub parent_sum_sq: f64,
    /// (Σ z)² over the parents.
    pub parent_sq_sum: f64,
}

impl FamilyMoments {
    /// Moments of one complete family row, child first.
    pub fn from_scores(z_child: f64, z_parents: &[f64]) -> Self {
        let parent_sum_sq: f64 = z_parents.iter().map(|v| v * v).sum();
        let parent_sum: f64 = z_parents.iter().sum();
        let all = parent_sum + z_child;
        Self {
            count: 1.0,
            family_sum_sq: parent_sum_sq + z_child * z_child,
            family_sq_sum: all * all,
            parent_sum_sq,
            parent_sq_sum: parent_sum * parent_sum,
        }
    }

    /// Summed `log R` for `num_parents` parents at correlation `rho`.
    pub fn ratio_log(&self, num_parents: usize, rho: f64) -> f64 {
        if num_parents == 0 {
            return 0.0;
        }
        let k = num_parents;
        let n = k + 1;
        -0.5 * self.count * (logdet_unchecked(n, rho) - logdet_unchecked(k, rho))
            - 0.5
                * (inverse_quadratic(n, rho, self.family_sum_sq, self.family_sq_sum)
                    - self.family_sum_sq)
            + 0.5
                * (inverse_quadratic(k, rho, self.parent_sum_sq, self.parent_sq_sum)
                    - self.parent_sum_sq)
    }
}

impl Add for FamilyMoments {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for FamilyMoments {
    fn add_assign(&mut self, rhs: Self) {
        self.count += rhs.count;
        self.family_sum_sq += rhs.family_sum_sq;
        self.family_sq_sum += rhs.family_sq_sum;
        self.parent_sum_sq += rhs.parent_sum_sq;
        self.parent_sq_sum += rhs.parent_sq_sum;
    }
}

impl std::iter::Sum for FamilyMoments {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Maximizer of the summed `log R` over the feasible ρ interval, with its
/// objective value.
pub fn fit_rho_moments(num_parents: usize, moments: &FamilyMoments) -> (f64, f64) {
    if num_parents == 0 {
        return (0.0, 0.0);
    }
    let (lo, hi) = rho_bounds(num_parents + 1);
    let best = golden_section_max(
        |rho| moments.ratio_log(num_parents, rho),
        lo,
        hi,
        RHO_TOL,
        &[0.0],
    );
    (best.x, best.value)
}

/// Maximum-likelihood ρ for rows of unit-cube family points, child first.
pub fn fit_rho(family_u_rows: &[Vec<f64>]) -> Result<f64> {
    if family_u_rows.len() < 2 {
        return Err(Error::TooFewRows(family_u_rows.len()));
    }
    let width = family_u_rows[0].len();
    if width < 2 {
        return Err(Error::InvalidInput(
            "a family needs a child and at least one parent".into(),
        ));
    }
    let mut moments = FamilyMoments::default();
    for row in family_u_rows {
        if row.len() != width {
            return Err(Error::InvalidInput("ragged family rows".into()));
        }
        let z = to_scores(row)?;
        moments += FamilyMoments::from_scores(z[0], &z[1..]);
    }
    Ok(fit_rho_moments(width - 1, &moments).0)
}
