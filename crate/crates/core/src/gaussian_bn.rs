//! Linear-Gaussian Bayesian networks: the baseline model. Each node is a
//! Gaussian whose mean is linear in its parents.

use crate::data::MaskedDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::graph::Dag;
use crate::normal::LN_SQRT_2PI;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

/// Noise variances are floored here so families never degenerate.
pub const MIN_VARIANCE: f64 = 1e-9;
/// Default EM stopping threshold on the total log-likelihood gain.
pub const DEFAULT_EM_TOL: f64 = 1e-4;
pub const DEFAULT_EM_MAX_ITERS: usize = 200;

/// Relative pivot below which a parent design counts as collinear.
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianBn {
    column_names: Vec<String>,
    dag: Dag,
    intercepts: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl LinearGaussianBn {
    pub fn new(
        column_names: Vec<String>,
        dag: Dag,
        intercepts: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let n = dag.num_vars();
        if column_names.len() != n
            || intercepts.len() != n
            || coefficients.len() != n
            || variances.len() != n
        {
            return Err(Error::Validation(format!(
                "parameter vectors do not match {n} nodes"
            )));
        }
        for i in 0..n {
            if coefficients[i].len() != dag.parents(i).len() {
                return Err(Error::Validation(format!(
                    "node {i} has {} parents but {} coefficients",
                    dag.parents(i).len(),
                    coefficients[i].len()
                )));
            }
            let finite = intercepts[i].is_finite() && coefficients[i].iter().all(|b| b.is_finite());
            if !finite || !(variances[i].is_finite() && variances[i] > 0.0) {
                return Err(Error::Validation(format!(
                    "node {i} has non-finite parameters or variance <= 0"
                )));
            }
        }
        Ok(Self {
            column_names,
            dag,
            intercepts,
            coefficients,
            variances,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn num_vars(&self) -> usize {
        self.dag.num_vars()
    }

    /// Σ of per-family conditional Gaussian log-densities.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        (0..self.num_vars())
            .map(|i| {
                let mean = self.intercepts[i]
                    + self
                        .dag
                        .parents(i)
                        .iter()
                        .zip(&self.coefficients[i])
                        .map(|(&p, b)| b * x[p])
                        .sum::<f64>();
                let r = x[i] - mean;
                -LN_SQRT_2PI - 0.5 * self.variances[i].ln() - 0.5 * r * r / self.variances[i]
            })
            .sum()
    }

    /// Ancestral sampling with one ChaCha stream per row.
    pub fn forward_sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let order = self
            .dag
            .topological_order()
            .expect("model graph is acyclic");
        exec::map_range(count, |r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut x = vec![0.0; self.num_vars()];
            for &i in &order {
                let e: f64 = rng.sample(StandardNormal);
                let mean = self.intercepts[i]
                    + self
                        .dag
                        .parents(i)
                        .iter()
                        .zip(&self.coefficients[i])
                        .map(|(&p, b)| b * x[p])
                        .sum::<f64>();
                x[i] = mean + self.variances[i].sqrt() * e;
            }
            x
        })
    }

    /// Total observed-data log-likelihood of `data`.
    pub fn log_marginal_sum(&self, data: &MaskedDataset) -> Result<f64> {
        Ok(joint_gaussian(self).expected_stats(data)?.0)
    }
}

/// Mean vector and covariance of the joint distribution a network encodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianJoint {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Propagates means and covariances in topological order.
pub fn joint_gaussian(model: &LinearGaussianBn) -> GaussianJoint {
    let n = model.num_vars();
    let order = model
        .dag
        .topological_order()
        .expect("model graph is acyclic");
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    let mut done: Vec<usize> = Vec::with_capacity(n);
    for &i in &order {
        let parents = model.dag.parents(i);
        let beta = &model.coefficients[i];
        mean[i] = model.intercepts[i]
            + parents
                .iter()
                .zip(beta)
                .map(|(&p, b)| b * mean[p])
                .sum::<f64>();
        for &j in &done {
            let c: f64 = parents
                .iter()
                .zip(beta)
                .map(|(&p, b)| b * cov[(p, j)])
                .sum();
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
        let self_cov: f64 = parents
            .iter()
            .zip(beta)
            .map(|(&p, b)| b * cov[(p, i)])
            .sum();
        cov[(i, i)] = model.variances[i] + self_cov;
        done.push(i);
    }
    GaussianJoint { mean, cov }
}

/// Exact log-density of the observed cells of one instance; hidden cells
/// are integrated out by dropping their coordinates.
pub fn log_marginal_lg(model: &LinearGaussianBn, instance: &[Option<f64>]) -> Result<f64> {
    joint_gaussian(model).log_marginal(instance)
}

/// Conditioning of the joint on one observed/hidden pattern.
struct PatternSolve {
    observed: Vec<usize>,
    hidden: Vec<usize>,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    log_det: f64,
    /// Σ_ho Σ_oo⁻¹
    gain: DMatrix<f64>,
    /// Σ_hh − Σ_ho Σ_oo⁻¹ Σ_oh
    cond_cov: DMatrix<f64>,
}

impl GaussianJoint {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn pattern(&self, mask: &[bool]) -> Result<PatternSolve> {
        let observed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let hidden: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        let sub = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.cov[(rows[a], cols[b])])
        };
        let s_hh = sub(&hidden, &hidden);
        if observed.is_empty() {
            let gain = DMatrix::zeros(hidden.len(), 0);
            return Ok(PatternSolve {
                observed,
                hidden,
                chol: None,
                log_det: 0.0,
                gain,
                cond_cov: s_hh,
            });
        }
        let s_oo = sub(&observed, &observed);
        let s_ho = sub(&hidden, &observed);
        let chol = s_oo
            .cholesky()
            .ok_or_else(|| Error::Numerical("joint covariance is not positive definite".into()))?;
        let log_det = chol.ln_determinant();
        // Σ_oo⁻¹ Σ_oh, transposed
        let gain = chol.solve(&s_ho.transpose()).transpose();
        let cond_cov = &s_hh - &gain * s_ho.transpose();
        Ok(PatternSolve {
            observed,
            hidden,
            chol: Some(chol),
            log_det,
            gain,
            cond_cov,
        })
    }

    pub fn log_marginal(&self, instance: &[Option<f64>]) -> Result<f64> {
        let mask: Vec<bool> = instance.iter().map(Option::is_some).collect();
        let values: Vec<f64> = instance.iter().map(|v| v.unwrap_or(0.0)).collect();
        let solve = self.pattern(&mask)?;
        Ok(self.row_stats(&solve, &values).0)
    }

    /// Log-likelihood of the observed part of a row and the conditional
    /// mean completion of the row.
    fn row_stats(&self, solve: &PatternSolve, values: &[f64]) -> (f64, DVector<f64>) {
        let mut full = DVector::from_column_slice(values);
        let Some(chol) = &solve.chol else {
            for &h in &solve.hidden {
                full[h] = self.mean[h];
            }
            return (0.0, full);
        };
        let resid = DVector::from_iterator(
            solve.observed.len(),
            solve.observed.iter().map(|&o| values[o] - self.mean[o]),
        );
        let solved = chol.solve(&resid);
        let quad = resid.dot(&solved);
        let ll = -(solve.observed.len() as f64) * LN_SQRT_2PI - 0.5 * solve.log_det - 0.5 * quad;
        let shift = &solve.gain * &resid;
        for (a, &h) in solve.hidden.iter().enumerate() {
            full[h] = self.mean[h] + shift[a];
        }
        (ll, full)
    }

    /// E-step: observed-data log-likelihood and the expected complete-data
    /// sufficient statistics. Rows are grouped by missingness pattern so each
    /// pattern is factorized once.
    pub fn expected_stats(&self, data: &MaskedDataset) -> Result<(f64, GaussianStats)> {
        let n = self.dim();
        if data.num_cols() != n {
            return Err(Error::InvalidInput(format!(
                "model has {n} variables, data has {} columns",
                data.num_cols()
            )));
        }
        let mut groups: BTreeMap<&[bool], Vec<usize>> = BTreeMap::new();
        for r in 0..data.num_rows() {
            groups.entry(data.row_mask(r)).or_default().push(r);
        }
        let groups: Vec<(&[bool], Vec<usize>)> = groups.into_iter().collect();
        let parts = exec::map_slice(&groups, |(mask, rows)| -> Result<(f64, GaussianStats)> {
            let solve = self.pattern(mask)?;
            let mut stats = GaussianStats::zeros(n);
            let mut ll = 0.0;
            for &r in rows {
                let (l, full) = self.row_stats(&solve, data.raw_row(r));
                ll += l;
                stats.add_row(&full);
            }
            for (a, &ha) in solve.hidden.iter().enumerate() {
                for (b, &hb) in solve.hidden.iter().enumerate() {
                    stats.cross[(ha, hb)] += rows.len() as f64 * solve.cond_cov[(a, b)];
                }
            }
            Ok((ll, stats))
        });
        let mut total = 0.0;
        let mut stats = GaussianStats::zeros(n);
        for part in parts {
            let (ll, s) = part?;
            total += ll;
            stats.merge(&s);
        }
        Ok((total, stats))
    }
}

/// Count, sums and cross-product sums of (possibly expected) complete rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub count: f64,
    pub sum: DVector<f64>,
    pub cross: DMatrix<f64>,
}

/// Fitted regression of one node on its parents.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub variance: f64,
    /// Maximized log-likelihood of the family over the rows in the stats.
    pub log_likelihood: f64,
}

impl GaussianStats {
    pub fn zeros(n: usize) -> Self {
        Self {
            count: 0.0,
            sum: DVector::zeros(n),
            cross: DMatrix::zeros(n, n),
        }
    }

    pub fn from_complete(data: &MaskedDataset) -> Result<Self> {
        if !data.is_complete() {
            return Err(Error::InvalidInput(
                "complete-data statistics need fully observed data".into(),
            ));
        }
        let mut stats = Self::zeros(data.num_cols());
        for r in 0..data.num_rows() {
            stats.add_row(&DVector::from_column_slice(data.raw_row(r)));
        }
        Ok(stats)
    }

    fn add_row(&mut self, x: &DVector<f64>) {
        self.count += 1.0;
        self.sum += x;
        self.cross.ger(1.0, x, x, 1.0);
    }

    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum += &other.sum;
        self.cross += &other.cross;
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.sum / self.count
    }

    /// Maximum-likelihood covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        &self.cross / self.count - &m * m.transpose()
    }

    /// Least squares of `child` on `parents` with an intercept and ML
    /// residual variance.
    pub fn fit_family(&self, child: usize, parents: &[usize]) -> Result<FamilyFit> {
        let mean = self.mean();
        let cov = self.covariance();
        let k = parents.len();
        let mut beta = vec![0.0; k];
        let mut explained = 0.0;
        if k > 0 {
            let scale: Vec<f64> = parents
                .iter()
                .map(|&p| cov[(p, p)].max(0.0).sqrt())
                .collect();
            if scale.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
                return Err(Error::SingularDesign(child));
            }
            let corr = DMatrix::from_fn(k, k, |a, b| {
                cov[(parents[a], parents[b])] / (scale[a] * scale[b])
            });
            let rhs = DVector::from_fn(k, |a, _| cov[(parents[a], child)] / scale[a]);
            let chol = corr.cholesky().ok_or(Error::SingularDesign(child))?;
            if chol.l_dirty().diagonal().iter().any(|d| d * d < PIVOT_TOL) {
                return Err(Error::SingularDesign(child));
            }
            let gamma = chol.solve(&rhs);
            for a in 0..k {
                beta[a] = gamma[a] / scale[a];
            }
            explained = gamma.dot(&rhs);
        }
        let raw_variance = cov[(child, child)] - explained;
        let variance = raw_variance.max(MIN_VARIANCE);
        let intercept = mean[child]
            - parents
                .iter()
                .zip(&beta)
                .map(|(&p, b)| b * mean[p])
                .sum::<f64>();
        let n = self.count;
        let log_likelihood =
            -n * LN_SQRT_2PI - 0.5 * n * variance.ln() - 0.5 * n * raw_variance.max(0.0) / variance;
        Ok(FamilyFit {
            intercept,
            coefficients: beta,
            variance,
            log_likelihood,
        })
    }

    /// Fits every family of `dag` from these statistics.
    pub fn fit_dag(&self, dag: &Dag, column_names: Vec<String>) -> Result<LinearGaussianBn> {
        let fits = exec::map_range(dag.num_vars(), |i| self.fit_family(i, dag.parents(i)));
        let fits: Vec<FamilyFit> = fits.into_iter().collect::<Result<_>>()?;
        LinearGaussianBn::new(
            column_names,
            dag.clone(),
            fits.iter().map(|f| f.intercept).collect(),
            fits.iter().map(|f| f.coefficients.clone()).collect(),
            fits.iter().map(|f| f.variance).collect(),
        )
    }
}

/// Per-family least squares on fully observed data.
pub fn fit_complete_lg(data: &MaskedDataset, dag: &Dag) -> Result<LinearGaussianBn> {
    check_graph(data, dag)?;
    let widest = (0..dag.num_vars())
        .map(|i| dag.parents(i).len() + 1)
        .max()
        .unwrap_or(1);
    if data.num_rows() <= widest + 1 {
        return Err(Error::TooFewRows(data.num_rows()));
    }
    GaussianStats::from_complete(data)?.fit_dag(dag, data.column_names().to_vec())
}

fn check_graph(data: &MaskedDataset, dag: &Dag) -> Result<()> {
    if dag.num_vars() != data.num_cols() {
        return Err(Error::InvalidInput(format!(
            "graph has {} nodes, data has {} columns",
            dag.num_vars(),
            data.num_cols()
        )));
    }
    Ok(())
}

/// Outcome of [`em_fit_lg`].
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: LinearGaussianBn,
    /// Observed-data log-likelihood of each successive model; the last entry
    /// belongs to `model`.
    pub trace: Vec<f64>,
}

/// Independent Gaussians from the observed cells of each column.
fn independent_start(data: &MaskedDataset) -> Result<LinearGaussianBn> {
    let n = data.num_cols();
    let mut means = Vec::with_capacity(n);
    let mut vars = Vec::with_capacity(n);
    for c in 0..n {
        let col = data.observed_column(c);
        if col.len() < 2 {
            return Err(Error::DegenerateColumn(data.column_names()[c].clone()));
        }
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
        means.push(m);
        vars.push(v.max(MIN_VARIANCE));
    }
    LinearGaussianBn::new(
        data.column_names().to_vec(),
        Dag::empty(n),
        means,
        vec![Vec::new(); n],
        vars,
    )
}

/// EM for a fixed structure. The E-step conditions the joint Gaussian on
/// each row's observed cells; the M-step refits every family from the
/// expected statistics. Stops once the log-likelihood gains less than `tol`.
pub fn em_fit_lg(data: &MaskedDataset, dag: &Dag, tol: f64, max_iters: usize) -> Result<EmFit> {
    check_graph(data, dag)?;
    if data.is_complete() {
        let model = fit_complete_lg(data, dag)?;
        let ll = model.log_marginal_sum(data)?;
        return Ok(EmFit {
            model,
            trace: vec![ll],
        });
    }
    let names = data.column_names().to_vec();
    let start = independent_start(data)?;
    let mut joint = joint_gaussian(&start);
    let mut model = start;
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let (ll, stats) = joint.expected_stats(data)?;
        if let Some(&prev) = trace.last() {
            if ll - prev < tol {
                trace.push(ll);
                return Ok(EmFit { model, trace });
            }
        }
        trace.push(ll);
        model = stats.fit_dag(dag, names.clone())?;
        joint = joint_gaussian(&model);
    }
    let (ll, _) = joint.expected_stats(data)?;
    trace.push(ll);
    Ok(EmFit { model, trace })
}

/// Expected sufficient statistics under an unrestricted Gaussian fitted by
/// EM; scoring families from them lets structure search run on
/// incomplete data.
pub fn expected_stats_unrestricted(
    data: &MaskedDataset,
    tol: f64,
    max_iters: usize,
) -> Result<GaussianStats> {
    if data.is_complete() {
        return GaussianStats::from_complete(data);
    }
    let n = data.num_cols();
    let full = Dag::from_parents((0..n).map(|i| (0..i).collect()).collect())?;
    let fit = em_fit_lg(data, &full, tol, max_iters)?;
    Ok(joint_gaussian(&fit.model).expected_stats(data)?.1)
}
