//! Greedy BIC structure search over DAGs, shared by both model kinds.
//!
//! Starting from the empty graph, every legal single-edge addition,
//! deletion and reversal is scored and the best one taken, until none
//! improves the score. Scores decompose over families, so each move only
//! rescores the one or two families it touches, and family scores are
//! cached by (child, parent set).

use crate::cbn::{fit_marginals, ScoreTable};
use crate::copula::fit_rho_moments;
use crate::data::MaskedDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::gaussian_bn::GaussianStats;
use crate::graph::Dag;
use crate::marginals::KdeMarginal;
use crate::quadrature::NormalRule;
use std::collections::HashMap;

/// Smallest score gain that counts as an improvement.
const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub max_parents: usize,
    /// At most one parent per node.
    pub tree_constraint: bool,
    pub max_iterations: usize,
    /// Gauss–Hermite nodes per hidden dimension when scoring incomplete data.
    pub quad_nodes: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_parents: 2,
            tree_constraint: false,
            max_iterations: 10_000,
            quad_nodes: crate::cbn::DEFAULT_QUAD_NODES,
        }
    }
}

impl SearchConfig {
    pub fn tree() -> Self {
        Self {
            max_parents: 1,
            tree_constraint: true,
            ..Self::default()
        }
    }

    pub fn with_max_parents(max_parents: usize) -> Self {
        Self {
            max_parents,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_constraint && self.max_parents != 1 {
            return Err(Error::InvalidInput(
                "tree constraint requires max_parents = 1".into(),
            ));
        }
        if self.quad_nodes < 2 {
            return Err(Error::InvalidInput("quad_nodes must be at least 2".into()));
        }
        Ok(())
    }

    fn parent_limit(&self) -> usize {
        if self.tree_constraint {
            1
        } else {
            self.max_parents
        }
    }
}

/// `score = Σ per_family_scores + marginal_term − penalty`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredStructure {
    pub dag: Dag,
    pub score: f64,
    /// Maximized log-likelihood share of each family.
    pub per_family_scores: Vec<f64>,
    /// Structure-independent part of the likelihood (CBN marginals).
    pub marginal_term: f64,
    pub penalty: f64,
    /// Penalized score after the start and after each accepted move.
    pub trace: Vec<f64>,
}

/// `½ ln(M) |Θ|`.
pub fn bic_penalty(num_params: usize, num_instances: usize) -> f64 {
    0.5 * (num_instances as f64).ln() * num_params as f64
}

/// A decomposable likelihood over families.
pub trait FamilyScorer: Sync {
    fn num_vars(&self) -> usize;
    fn num_instances(&self) -> usize;
    /// Maximized family log-likelihood share.
    fn family_log_likelihood(&self, child: usize, parents: &[usize]) -> Result<f64>;
    fn num_params(&self, num_parents: usize) -> usize;
    /// Likelihood terms no structure affects.
    fn marginal_term(&self) -> f64 {
        0.0
    }

    /// Penalized family score; infeasible families score −∞.
    fn family_score(&self, child: usize, parents: &[usize]) -> f64 {
        match self.family_log_likelihood(child, parents) {
            Ok(ll) => ll - bic_penalty(self.num_params(parents.len()), self.num_instances()),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// CBN families: one ρ per family with parents; the objective is the copula
/// share of the (bound on the) log-likelihood.
pub struct CbnScorer {
    table: ScoreTable,
    rule: NormalRule,
    marginal_term: f64,
}

impl CbnScorer {
    pub fn new(data: &MaskedDataset, quad_nodes: usize) -> Result<Self> {
        let marginals = fit_marginals(data)?;
        Self::with_marginals(data, &marginals, quad_nodes)
    }

    pub fn with_marginals(
        data: &MaskedDataset,
        marginals: &[KdeMarginal],
        quad_nodes: usize,
    ) -> Result<Self> {
        if data.num_rows() < 2 {
            return Err(Error::TooFewRows(data.num_rows()));
        }
        let table = ScoreTable::new(data, marginals);
        let marginal_term = exec::sum_range(data.num_rows(), |r| {
            (0..data.num_cols())
                .filter_map(|c| data.get(r, c).map(|x| marginals[c].ln_pdf(x)))
                .sum()
        });
        Ok(Self {
            table,
            rule: NormalRule::new(quad_nodes)?,
            marginal_term,
        })
    }
}

impl FamilyScorer for CbnScorer {
    fn num_vars(&self) -> usize {
        self.table.num_cols()
    }

    fn num_instances(&self) -> usize {
        self.table.num_rows()
    }

    fn family_log_likelihood(&self, child: usize, parents: &[usize]) -> Result<f64> {
        if parents.is_empty() {
            return Ok(0.0);
        }
        let moments = self.table.family_moments(child, parents, &self.rule);
        Ok(fit_rho_moments(parents.len(), &moments).1)
    }

    fn num_params(&self, num_parents: usize) -> usize {
        usize::from(num_parents > 0)
    }

    fn marginal_term(&self) -> f64 {
        self.marginal_term
    }
}

/// Linear-Gaussian families: intercept, variance and one weight per parent.
pub struct LgScorer {
    stats: GaussianStats,
}

impl LgScorer {
    pub fn new(stats: GaussianStats) -> Self {
        Self { stats }
    }
}

impl FamilyScorer for LgScorer {
    fn num_vars(&self) -> usize {
        self.stats.sum.len()
    }

    fn num_instances(&self) -> usize {
        self.stats.count as usize
    }

    fn family_log_likelihood(&self, child: usize, parents: &[usize]) -> Result<f64> {
        Ok(self.stats.fit_family(child, parents)?.log_likelihood)
    }

    fn num_params(&self, num_parents: usize) -> usize {
        num_parents + 2
    }
}

/// Penalized CBN family score on `data`, excluding marginal terms.
pub fn family_score(
    data: &MaskedDataset,
    child: usize,
    parents: &[usize],
    marginals: &[KdeMarginal],
    quad_nodes: usize,
) -> Result<f64> {
    if parents.contains(&child) {
        return Err(Error::InvalidGraph(format!(
            "node {child} cannot be its own parent"
        )));
    }
    let scorer = CbnScorer::with_marginals(data, marginals, quad_nodes)?;
    let ll = scorer.family_log_likelihood(child, parents)?;
    Ok(ll - bic_penalty(scorer.num_params(parents.len()), scorer.num_instances()))
}

/// Greedy CBN structure search on `data`.
pub fn greedy_search(data: &MaskedDataset, config: &SearchConfig) -> Result<ScoredStructure> {
    config.validate()?;
    greedy_search_with(&CbnScorer::new(data, config.quad_nodes)?, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Add,
    Delete,
    Reverse,
}

type FamilyKey = (usize, Vec<usize>);

struct Cache<'a, S: FamilyScorer + ?Sized> {
    scorer: &'a S,
    scores: HashMap<FamilyKey, f64>,
}

impl<S: FamilyScorer + ?Sized> Cache<'_, S> {
    fn get(&self, child: usize, parents: &[usize]) -> f64 {
        self.scores[&(child, parents.to_vec())]
    }

    /// Scores all uncached families concurrently.
    fn fill(&mut self, mut keys: Vec<FamilyKey>) {
        keys.retain(|k| !self.scores.contains_key(k));
        keys.sort();
        keys.dedup();
        let scorer = self.scorer;
        let values = exec::map_slice(&keys, |(c, p)| scorer.family_score(*c, p));
        self.scores.extend(keys.into_iter().zip(values));
    }
}

fn with_parent(parents: &[usize], p: usize) -> Vec<usize> {
    let mut v = parents.to_vec();
    v.push(p);
    v.sort_unstable();
    v
}

fn without_parent(parents: &[usize], p: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&q| q != p).collect()
}

/// Legal moves as (child, parent, kind) in lexicographic order; for
/// `Reverse`, (child, parent) names the existing edge parent → child.
fn legal_moves(dag: &Dag, limit: usize) -> Vec<(usize, usize, Move)> {
    let n = dag.num_vars();
    let mut moves = Vec::new();
    for c in 0..n {
        for p in 0..n {
            if p == c {
                continue;
            }
            if dag.has_edge(p, c) {
                moves.push((c, p, Move::Delete));
                if dag.parents(p).len() < limit {
                    let mut trial = dag.clone();
                    trial.remove_edge(p, c).expect("edge exists");
                    if !trial.has_path(p, c) {
                        moves.push((c, p, Move::Reverse));
                    }
                }
            } else if !dag.has_edge(c, p) && dag.parents(c).len() < limit && !dag.has_path(c, p) {
                moves.push((c, p, Move::Add));
            }
        }
    }
    moves
}

/// New parent sets touched by a move.
fn move_families(dag: &Dag, (c, p, kind): (usize, usize, Move)) -> Vec<FamilyKey> {
    match kind {
        Move::Add => vec![(c, with_parent(dag.parents(c), p))],
        Move::Delete => vec![(c, without_parent(dag.parents(c), p))],
        Move::Reverse => vec![
            (c, without_parent(dag.parents(c), p)),
            (p, with_parent(dag.parents(p), c)),
        ],
    }
}

/// Greedy best-ascent search with any decomposable scorer.
pub fn greedy_search_with<S: FamilyScorer + ?Sized>(
    scorer: &S,
    config: &SearchConfig,
) -> Result<ScoredStructure> {
    config.validate()?;
    let n = scorer.num_vars();
    let limit = config.parent_limit();
    let mut dag = Dag::empty(n);
    let mut cache = Cache {
        scorer,
        scores: HashMap::new(),
    };
    cache.fill((0..n).map(|i| (i, Vec::new())).collect());
    let mut family: Vec<f64> = (0..n).map(|i| cache.get(i, &[])).collect();
    let mut total: f64 = family.iter().sum();
    if !total.is_finite() {
        return Err(Error::Numerical(
            "empty graph has a non-finite score".into(),
        ));
    }
    let mut trace = vec![total + scorer.marginal_term()];

    for _ in 0..config.max_iterations {
        let moves = legal_moves(&dag, limit);
        cache.fill(moves.iter().flat_map(|&m| move_families(&dag, m)).collect());
        let mut best: Option<((usize, usize, Move), f64)> = None;
        for &m in &moves {
            let delta: f64 = move_families(&dag, m)
                .iter()
                .map(|(c, ps)| cache.get(*c, ps) - family[*c])
                .sum();
            if delta.is_finite() && best.is_none_or(|(_, d)| delta > d) {
                best = Some((m, delta));
            }
        }
        let Some((m, _)) = best.filter(|&(_, d)| d > MIN_GAIN) else {
            break;
        };
        for (c, ps) in move_families(&dag, m) {
            family[c] = cache.get(c, &ps);
            dag.set_parents(c, ps)?;
        }
        total = family.iter().sum();
        trace.push(total + scorer.marginal_term());
    }

    let per_family_scores: Vec<f64> = (0..n)
        .map(|i| scorer.family_log_likelihood(i, dag.parents(i)))
        .collect::<Result<_>>()?;
    let penalty: f64 = (0..n)
        .map(|i| {
            bic_penalty(
                scorer.num_params(dag.parents(i).len()),
                scorer.num_instances(),
            )
        })
        .sum();
    let score = per_family_scores.iter().sum::<f64>() + scorer.marginal_term() - penalty;
    Ok(ScoredStructure {
        dag,
        score,
        per_family_scores,
        marginal_term: scorer.marginal_term(),
        penalty,
        trace,
    })
}
