//! Copula Bayesian networks: KDE marginals tied together by per-family
//! uniform-correlation Gaussian copulas.
//!
//! Missing cells are handled without inference. Each family's `log R` is
//! averaged over its hidden members under the product of their marginals,
//! which after `u = F̂(h)` is a plain expectation over independent uniform
//! coordinates, i.e. over independent standard normal scores. That average
//! plus the observed marginal log-densities lower-bounds the instance
//! log-likelihood and decomposes over families.

use crate::copula::{fit_rho_moments, FamilyMoments, UniformGaussianCopula};
use crate::data::MaskedDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::Dag;
use crate::marginals::{fit_kde, KdeMarginal};
use crate::normal;
use crate::quadrature::NormalRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gauss–Hermite nodes per hidden dimension unless told otherwise.
pub const DEFAULT_QUAD_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CbnModel {
    column_names: Vec<String>,
    dag: Dag,
    marginals: Vec<KdeMarginal>,
    copulas: Vec<Option<UniformGaussianCopula>>,
}

impl CbnModel {
    /// Checks that every node with parents has a copula of dimension
    /// `1 + |parents|` and that roots have none.
    pub fn new(
        column_names: Vec<String>,
        dag: Dag,
        marginals: Vec<KdeMarginal>,
        copulas: Vec<Option<UniformGaussianCopula>>,
    ) -> Result<Self> {
        let n = dag.num_vars();
        if column_names.len() != n || marginals.len() != n || copulas.len() != n {
            return Err(Error::Validation(format!(
                "{n} nodes but {} names, {} marginals, {} copulas",
                column_names.len(),
                marginals.len(),
                copulas.len()
            )));
        }
        for (i, c) in copulas.iter().enumerate() {
            let k = dag.parents(i).len();
            match (k, c) {
                (0, None) => {}
                (0, Some(_)) => {
                    return Err(Error::Validation(format!("root node {i} carries a copula")))
                }
                (_, None) => {
                    return Err(Error::Validation(format!(
                        "node {i} has parents but no copula"
                    )))
                }
                (k, Some(c)) if c.dim() != k + 1 => {
                    return Err(Error::Validation(format!(
                        "node {i} has {k} parents but a {}-dimensional copula",
                        c.dim()
                    )))
                }
                _ => {}
            }
        }
        Ok(Self {
            column_names,
            dag,
            marginals,
            copulas,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn marginals(&self) -> &[KdeMarginal] {
        &self.marginals
    }

    pub fn copulas(&self) -> &[Option<UniformGaussianCopula>] {
        &self.copulas
    }

    pub fn num_vars(&self) -> usize {
        self.dag.num_vars()
    }

    pub fn rho(&self, node: usize) -> Option<f64> {
        self.copulas[node].map(|c| c.rho())
    }

    /// Same structure and marginals with every copula set to independence.
    pub fn with_independent_copulas(&self) -> Self {
        let copulas = self
            .copulas
            .iter()
            .map(|c| c.map(|c| UniformGaussianCopula::independent(c.dim())))
            .collect();
        Self {
            copulas,
            ..self.clone()
        }
    }

    /// Normal score `Φ⁻¹(F̂ᵢ(x))` of a value of variable `i`.
    pub fn score(&self, i: usize, x: f64) -> f64 {
        normal::quantile(self.marginals[i].cdf(x))
    }

    fn family_ratio(&self, child: usize, z: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match &self.copulas[child] {
            None => 0.0,
            Some(c) => {
                scratch.clear();
                scratch.extend(self.dag.parents(child).iter().map(|&p| z[p]));
                c.ratio_log_z(z[child], scratch)
            }
        }
    }

    /// Log joint density of a complete instance.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = (0..self.num_vars()).map(|i| self.score(i, x[i])).collect();
        let mut scratch = Vec::new();
        (0..self.num_vars())
            .map(|i| self.marginals[i].ln_pdf(x[i]) + self.family_ratio(i, &z, &mut scratch))
            .sum()
    }

    /// Expected `log R` of one family over its hidden members, integrated
    /// with a tensor-product rule in the hidden normal scores.
    fn expected_family_ratio(
        &self,
        child: usize,
        z: &[f64],
        observed: &[bool],
        rule: &NormalRule,
    ) -> f64 {
        let Some(copula) = &self.copulas[child] else {
            return 0.0;
        };
        let parents = self.dag.parents(child);
        let members: Vec<usize> = std::iter::once(child)
            .chain(parents.iter().copied())
            .collect();
        let hidden: Vec<usize> = (0..members.len())
            .filter(|&j| !observed[members[j]])
            .collect();
        let mut point: Vec<f64> = members
            .iter()
            .map(|&v| if observed[v] { z[v] } else { 0.0 })
            .collect();
        rule.expect(hidden.len(), |nodes| {
            for (&slot, &value) in hidden.iter().zip(nodes) {
                point[slot] = value;
            }
            copula.ratio_log_z(point[0], &point[1..])
        })
    }

    /// Per-instance lower bound; equals [`log_density`](Self::log_density)
    /// when nothing is hidden.
    pub fn instance_lower_bound(&self, row: &[Option<f64>], rule: &NormalRule) -> f64 {
        let n = self.num_vars();
        let observed: Vec<bool> = row.iter().map(Option::is_some).collect();
        let z: Vec<f64> = (0..n)
            .map(|i| row[i].map_or(0.0, |x| self.score(i, x)))
            .collect();
        (0..n)
            .map(|i| {
                let marginal = row[i].map_or(0.0, |x| self.marginals[i].ln_pdf(x));
                marginal + self.expected_family_ratio(i, &z, &observed, rule)
            })
            .sum()
    }

    /// Summed lower bound over all instances of `data`.
    pub fn lower_bound(&self, data: &MaskedDataset, quad_nodes: usize) -> Result<f64> {
        self.check_shape(data)?;
        let rule = NormalRule::new(quad_nodes)?;
        Ok(exec::sum_range(data.num_rows(), |r| {
            self.instance_lower_bound(&data.row(r), &rule)
        }))
    }

    /// Complete-data log-likelihood; errors if any cell is missing.
    pub fn log_likelihood(&self, data: &MaskedDataset) -> Result<f64> {
        self.check_shape(data)?;
        if !data.is_complete() {
            return Err(Error::InvalidInput(
                "log-likelihood needs fully observed data".into(),
            ));
        }
        Ok(exec::sum_range(data.num_rows(), |r| {
            self.log_density(data.raw_row(r))
        }))
    }

    /// Average per-instance score: exact log-density on complete rows, the
    /// lower bound on rows with hidden cells.
    pub fn average_log_probability(&self, data: &MaskedDataset, quad_nodes: usize) -> Result<f64> {
        Ok(self.lower_bound(data, quad_nodes)? / data.num_rows() as f64)
    }

    fn check_shape(&self, data: &MaskedDataset) -> Result<()> {
        if data.num_cols() != self.num_vars() {
            return Err(Error::InvalidInput(format!(
                "model has {} variables, data has {} columns",
                self.num_vars(),
                data.num_cols()
            )));
        }
        Ok(())
    }

    /// Ancestral sampling: roots draw independent normal scores, children
    /// draw from the Gaussian conditional of their copula, and each score is
    /// mapped through `Φ` and the marginal quantile. Row `r` uses its own
    /// ChaCha stream so output does not depend on scheduling.
    pub fn forward_sample(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let order = self
            .dag
            .topological_order()
            .expect("model graph is acyclic");
        let rows = exec::map_range(count, |r| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let n = self.num_vars();
            let mut z = vec![0.0; n];
            let mut x = vec![0.0; n];
            let mut parent_z = Vec::new();
            for &i in &order {
                let e: f64 = rng.sample(StandardNormal);
                z[i] = match &self.copulas[i] {
                    None => e,
                    Some(c) => {
                        parent_z.clear();
                        parent_z.extend(self.dag.parents(i).iter().map(|&p| z[p]));
                        let (mean, var) = c.conditional_z_params(&parent_z)?;
                        mean + var.sqrt() * e
                    }
                };
                let u = normal::cdf(z[i]).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                x[i] = self.marginals[i].quantile(u)?;
            }
            Ok(x)
        });
        rows.into_iter().collect()
    }

    /// Compares the bound's copula part for one instance with a Monte Carlo
    /// estimate of the energy functional under the product of marginals,
    /// sampling hidden values from their KDEs.
    pub fn energy_identity_check(
        &self,
        instance: &[Option<f64>],
        mc_samples: usize,
        seed: u64,
    ) -> Result<EnergyCheck> {
        let n = self.num_vars();
        if instance.len() != n {
            return Err(Error::InvalidInput(format!(
                "instance has {} cells, model has {n}",
                instance.len()
            )));
        }
        let rule = NormalRule::new(DEFAULT_QUAD_NODES)?;
        let observed: Vec<bool> = instance.iter().map(Option::is_some).collect();
        let z_obs: Vec<f64> = (0..n)
            .map(|i| instance[i].map_or(0.0, |x| self.score(i, x)))
            .collect();
        let bound_term: f64 = (0..n)
            .map(|i| self.expected_family_ratio(i, &z_obs, &observed, &rule))
            .sum();

        let hidden: Vec<usize> = (0..n).filter(|&i| !observed[i]).collect();
        let mut scratch = Vec::new();
        if hidden.is_empty() {
            let value: f64 = (0..n)
                .map(|i| self.family_ratio(i, &z_obs, &mut scratch))
                .sum();
            return Ok(EnergyCheck {
                bound_term,
                energy_mc: value,
                std_error: 0.0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = z_obs.clone();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..mc_samples {
            for &h in &hidden {
                let m = &self.marginals[h];
                let center = m.samples()[rng.gen_range(0..m.samples().len())];
                let e: f64 = rng.sample(StandardNormal);
                z[h] = self.score(h, center + m.bandwidth() * e);
            }
            let value: f64 = (0..n).map(|i| self.family_ratio(i, &z, &mut scratch)).sum();
            sum += value;
            sum_sq += value * value;
        }
        let m = mc_samples as f64;
        let mean = sum / m;
        let var = (sum_sq / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
        Ok(EnergyCheck {
            bound_term,
            energy_mc: mean,
            std_error: (var / m).sqrt(),
        })
    }
}

/// Outcome of [`CbnModel::energy_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    /// Σᵢ E[log Rᵢ] by quadrature.
    pub bound_term: f64,
    /// Monte Carlo estimate of the same expectation.
    pub energy_mc: f64,
    /// Standard error of `energy_mc`.
    pub std_error: f64,
}

impl EnergyCheck {
    pub fn agrees_within(&self, num_std_errors: f64) -> bool {
        (self.bound_term - self.energy_mc).abs() <= num_std_errors * self.std_error + 1e-12
    }
}

/// KDE per column from observed cells only.
pub fn fit_marginals(data: &MaskedDataset) -> Result<Vec<KdeMarginal>> {
    exec::map_range(data.num_cols(), |c| {
        fit_kde(&data.observed_column(c), None).map_err(|e| match e {
            Error::EmptyInput | Error::DegenerateInput(_) => {
                Error::DegenerateColumn(data.column_names()[c].clone())
            }
            other => other,
        })
    })
    .into_iter()
    .collect()
}

/// Normal scores of every observed cell under fixed marginals.
#[derive(Debug, Clone)]
pub struct ScoreTable {
    z: Vec<f64>,
    observed: Vec<bool>,
    num_cols: usize,
}

impl ScoreTable {
    pub fn new(data: &MaskedDataset, marginals: &[KdeMarginal]) -> Self {
        let n = data.num_cols();
        let rows = exec::map_range(data.num_rows(), |r| {
            (0..n)
                .map(|c| {
                    data.get(r, c)
                        .map_or(0.0, |x| normal::quantile(marginals[c].cdf(x)))
                })
                .collect::<Vec<f64>>()
        });
        Self {
            z: rows.concat(),
            observed: data.mask().to_vec(),
            num_cols: n,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.z.len() / self.num_cols
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn row(&self, r: usize) -> (&[f64], &[bool]) {
        let n = self.num_cols;
        (
            &self.z[r * n..(r + 1) * n],
            &self.observed[r * n..(r + 1) * n],
        )
    }

    /// Sufficient statistics of a family, with hidden members replaced by
    /// their quadrature moments. For the two statistics (Σz² and (Σz)²),
    /// which are polynomials in the hidden scores, this is what the
    /// tensor-product rule returns.
    pub fn family_moments(
        &self,
        child: usize,
        parents: &[usize],
        rule: &NormalRule,
    ) -> FamilyMoments {
        let (m1, m2) = rule.moments();
        let expect = |sum: f64, sum_sq: f64, hidden: usize| -> (f64, f64) {
            let h = hidden as f64;
            (
                sum_sq + h * m2,
                sum * sum + 2.0 * sum * h * m1 + h * m2 + h * (h - 1.0) * m1 * m1,
            )
        };
        (0..self.num_rows())
            .map(|r| {
                let (z, obs) = self.row(r);
                let (mut ps, mut pss, mut ph) = (0.0, 0.0, 0usize);
                for &p in parents {
                    if obs[p] {
                        ps += z[p];
                        pss += z[p] * z[p];
                    } else {
                        ph += 1;
                    }
                }
                let (cs, css, ch) = if obs[child] {
                    (z[child], z[child] * z[child], 0)
                } else {
                    (0.0, 0.0, 1)
                };
                let (family_sum_sq, family_sq_sum) = expect(ps + cs, pss + css, ph + ch);
                let (parent_sum_sq, parent_sq_sum) = expect(ps, pss, ph);
                FamilyMoments {
                    count: 1.0,
                    family_sum_sq,
                    family_sq_sum,
                    parent_sum_sq,
                    parent_sq_sum,
                }
            })
            .sum()
    }
}

/// Fits copulas for a fixed structure given marginals and scores.
fn fit_copulas(
    table: &ScoreTable,
    dag: &Dag,
    rule: &NormalRule,
) -> Vec<Option<UniformGaussianCopula>> {
    exec::map_range(dag.num_vars(), |i| {
        let parents = dag.parents(i);
        if parents.is_empty() {
            return None;
        }
        let moments = table.family_moments(i, parents, rule);
        let (rho, _) = fit_rho_moments(parents.len(), &moments);
        Some(
            UniformGaussianCopula::new(parents.len() + 1, rho)
                .expect("fitted rho lies in the feasible interval"),
        )
    })
}

/// Marginals first, then each family's ρ by maximum likelihood.
pub fn fit_complete(data: &MaskedDataset, dag: &Dag) -> Result<CbnModel> {
    if !data.is_complete() {
        return Err(Error::InvalidInput(
            "fit_complete needs fully observed data".into(),
        ));
    }
    fit_missing(data, dag, DEFAULT_QUAD_NODES)
}

/// Marginals from observed cells, then each family's ρ maximizing that
/// family's share of the lower bound.
pub fn fit_missing(data: &MaskedDataset, dag: &Dag, quad_nodes: usize) -> Result<CbnModel> {
    if dag.num_vars() != data.num_cols() {
        return Err(Error::InvalidInput(format!(
            "graph has {} nodes, data has {} columns",
            dag.num_vars(),
            data.num_cols()
        )));
    }
    if data.num_rows() < 2 {
        return Err(Error::TooFewRows(data.num_rows()));
    }
    let rule = NormalRule::new(quad_nodes)?;
    let marginals = fit_marginals(data)?;
    let table = ScoreTable::new(data, &marginals);
    let copulas = fit_copulas(&table, dag, &rule);
    CbnModel::new(
        data.column_names().to_vec(),
        dag.clone(),
        marginals,
        copulas,
    )
}
