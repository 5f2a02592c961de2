//! Gaussian quadrature rules.
//!
//! Expectations over a uniform coordinate `u` on (0, 1) are computed in the
//! normal-score domain `z = Φ⁻¹(u)`: the substitution turns the uniform
//! measure into the standard normal one, so the rule used is Gauss–Hermite
//! rescaled to N(0, 1). Integrands that are polynomial in `z` of degree below
//! `2 * nodes` are integrated exactly.

use crate::error::{Error, Result};
use gauss_quad::{GaussHermite, GaussLegendre};
use std::f64::consts::{PI, SQRT_2};

/// Gauss–Hermite rule for expectations under a standard normal.
#[derive(Debug, Clone)]
pub struct NormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(num_nodes: usize) -> Result<Self> {
        let rule = GaussHermite::new(num_nodes).map_err(|_| {
            Error::InvalidInput(format!(
                "quadrature needs at least 2 nodes, got {num_nodes}"
            ))
        })?;
        let scale = PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (SQRT_2 * x, w / scale))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// First and second moments `(Σ w z, Σ w z²)` as seen by this rule.
    pub fn moments(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(m1, m2), (&z, &w)| {
                (m1 + w * z, m2 + w * z * z)
            })
    }

    /// Tensor-product expectation of `f` over `dims` independent standard
    /// normal coordinates. `f` receives the current node vector.
    pub fn expect<F>(&self, dims: usize, mut f: F) -> f64
    where
        F: FnMut(&[f64]) -> f64,
    {
        if dims == 0 {
            return f(&[]);
        }
        let n = self.len();
        let mut index = vec![0usize; dims];
        let mut point = vec![self.nodes[0]; dims];
        let mut total = 0.0;
        loop {
            let weight: f64 = index.iter().map(|&i| self.weights[i]).product();
            total += weight * f(&point);
            // odometer increment
            let mut d = 0;
            loop {
                index[d] += 1;
                if index[d] < n {
                    point[d] = self.nodes[index[d]];
                    break;
                }
                index[d] = 0;
                point[d] = self.nodes[0];
                d += 1;
                if d == dims {
                    return total;
                }
            }
        }
    }
}

/// Gauss–Legendre nodes and weights mapped to the interval `[lo, hi]`.
pub fn legendre_on(num_nodes: usize, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    let rule = GaussLegendre::new(num_nodes).map_err(|_| {
        Error::InvalidInput(format!(
            "quadrature needs at least 2 nodes, got {num_nodes}"
        ))
    })?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_rule_matches_gaussian_moments() {
        let rule = NormalRule::new(8).unwrap();
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
        let (m1, m2) = rule.moments();
        assert!(m1.abs() < 1e-13);
        assert!((m2 - 1.0).abs() < 1e-13);
        let m4 = rule.expect(1, |z| z[0].powi(4));
        assert!((m4 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_product_factorizes() {
        let rule = NormalRule::new(5).unwrap();
        // E[(z1 + z2 + z3 + 1)^2] = 3 + 1
        let v = rule.expect(3, |z| (z.iter().sum::<f64>() + 1.0).powi(2));
        assert!((v - 4.0).abs() < 1e-12);
        assert_eq!(rule.expect(0, |_| 2.5), 2.5);
    }

    #[test]
    fn rejects_single_node() {
        assert!(NormalRule::new(1).is_err());
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let pts = legendre_on(6, 0.0, 2.0).unwrap();
        let v: f64 = pts.iter().map(|&(x, w)| w * x.powi(3)).sum();
        assert!((v - 4.0).abs() < 1e-12);
    }
}
