//! Shared fixtures and oracles for integration tests.
#![allow(dead_code)]

use cbn::cbn::CbnModel;
use cbn::copula::UniformGaussianCopula;
use cbn::data::{load_csv, MaskedDataset};
use cbn::graph::Dag;
use cbn::marginals::fit_kde;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::path::PathBuf;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn load_wine() -> MaskedDataset {
    load_csv(data_dir().join("winequality-red.csv")).expect("wine data present in data/")
}

/// Skewed, heavy-tailed and symmetric marginal shapes in rotation.
fn transform(i: usize, z: f64) -> f64 {
    match i % 3 {
        0 => z.exp(),
        1 => z * z * z + z,
        _ => z,
    }
}

/// Rows whose normal scores form a Gaussian AR(1) chain with lag-one
/// correlation `rho`: exactly a chain of bivariate Gaussian copulas.
pub fn chain_rows(n: usize, rho: f64, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let mut z = vec![0.0; n];
            for i in 0..n {
                let e: f64 = rng.sample(StandardNormal);
                z[i] = if i == 0 {
                    e
                } else {
                    rho * z[i - 1] + (1.0 - rho * rho).sqrt() * e
                };
            }
            z.iter()
                .enumerate()
                .map(|(i, &v)| transform(i, v))
                .collect()
        })
        .collect()
}

pub fn chain_dataset(n: usize, rho: f64, m: usize, seed: u64) -> MaskedDataset {
    MaskedDataset::complete(
        &chain_rows(n, rho, m, seed),
        MaskedDataset::default_names(n),
    )
    .unwrap()
}

pub fn independent_dataset(n: usize, m: usize, seed: u64) -> MaskedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..n)
                .map(|i| transform(i, rng.sample(StandardNormal)))
                .collect()
        })
        .collect();
    MaskedDataset::complete(&rows, MaskedDataset::default_names(n)).unwrap()
}

/// Chain CBN with a fixed ρ on every edge and KDE marginals built from
/// `kde_points` synthetic draws.
pub fn chain_model(n: usize, rho: f64, kde_points: usize, seed: u64) -> CbnModel {
    let data = chain_dataset(n, rho, kde_points, seed);
    let marginals = (0..n)
        .map(|c| fit_kde(&data.observed_column(c), None).unwrap())
        .collect();
    let copulas = (0..n)
        .map(|i| (i > 0).then(|| UniformGaussianCopula::new(2, rho).unwrap()))
        .collect();
    CbnModel::new(
        MaskedDataset::default_names(n),
        Dag::chain(n),
        marginals,
        copulas,
    )
    .unwrap()
}

/// Sum of log R over all families at given normal scores.
pub fn total_ratio(model: &CbnModel, z: &[f64]) -> f64 {
    (0..model.num_vars())
        .filter_map(|i| {
            let c = model.copulas()[i]?;
            let parents: Vec<f64> = model.dag().parents(i).iter().map(|&p| z[p]).collect();
            Some(c.ratio_log_z(z[i], &parents))
        })
        .sum()
}

/// Monte Carlo estimate of the exact log-likelihood of a partially observed
/// instance, integrating hidden values against their KDE marginals
/// (importance sampling with the marginals as proposal). Returns the
/// estimate and its delta-method standard error.
pub fn mc_log_likelihood(
    model: &CbnModel,
    row: &[Option<f64>],
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let n = model.num_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observed_log: f64 = (0..n)
        .filter_map(|i| row[i].map(|x| model.marginals()[i].ln_pdf(x)))
        .sum();
    let mut z: Vec<f64> = (0..n)
        .map(|i| row[i].map_or(0.0, |x| model.score(i, x)))
        .collect();
    let hidden: Vec<usize> = (0..n).filter(|&i| row[i].is_none()).collect();
    let logs: Vec<f64> = (0..samples)
        .map(|_| {
            for &h in &hidden {
                let m = &model.marginals()[h];
                let center = m.samples()[rng.gen_range(0..m.samples().len())];
                let e: f64 = rng.sample(StandardNormal);
                z[h] = model.score(h, center + m.bandwidth() * e);
            }
            total_ratio(model, &z)
        })
        .collect();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let k = samples as f64;
    let mean = w.iter().sum::<f64>() / k;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let se_log = (var / k).sqrt() / mean;
    (observed_log + shift + mean.ln(), se_log)
}

/// One instance drawn from a chain's generator with cell `hide` missing.
pub fn instance_with_hidden(n: usize, rho: f64, hide: usize, seed: u64) -> Vec<Option<f64>> {
    let row = chain_rows(n, rho, 1, seed).remove(0);
    row.into_iter()
        .enumerate()
        .map(|(i, x)| (i != hide).then_some(x))
        .collect()
}
