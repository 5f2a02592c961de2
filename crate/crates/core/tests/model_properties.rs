mod common;

use approx::assert_abs_diff_eq;
use cbn::cbn::{fit_complete, fit_missing, CbnModel};
use cbn::copula::UniformGaussianCopula;
use cbn::data::{apply_missing_mask, MaskedDataset};
use cbn::diagnostics::{gaussian_copula_spearman, ks_statistic, pearson, spearman};
use cbn::graph::Dag;
use cbn::model_file::{self, Model};
use cbn::quadrature::NormalRule;
use common::*;

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

#[test]
fn zero_rho_samples_are_uncorrelated() {
    let model = chain_model(3, 0.5, 400, 1).with_independent_copulas();
    let draws = model.forward_sample(5000, 11).unwrap();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let r = pearson(&column(&draws, a), &column(&draws, b));
        assert!(r.abs() < 0.05, "pair ({a}, {b}): {r}");
    }
}

#[test]
fn sampled_rank_correlation_matches_closed_form() {
    let model = chain_model(2, 0.8, 400, 2);
    let draws = model.forward_sample(5000, 12).unwrap();
    let s = spearman(&column(&draws, 0), &column(&draws, 1));
    assert!((0.70..=0.87).contains(&s), "{s}");
    assert_abs_diff_eq!(s, gaussian_copula_spearman(0.8), epsilon = 0.03);
}

#[test]
fn sampled_columns_follow_model_marginals() {
    let model = chain_model(3, 0.6, 400, 3);
    let draws = model.forward_sample(5000, 13).unwrap();
    for c in 0..3 {
        let d = ks_statistic(&column(&draws, c), |x| model.marginals()[c].cdf(x));
        assert!(d < 0.03, "column {c}: KS {d}");
    }
}

#[test]
fn rho_recovered_with_a_tenth_hidden() {
    let data = apply_missing_mask(&chain_dataset(2, 0.6, 2000, 4), 0.1, 14).unwrap();
    let rho = fit_missing(&data, &Dag::chain(2), 8)
        .unwrap()
        .rho(1)
        .unwrap();
    assert!((0.5..=0.7).contains(&rho), "{rho}");
}

#[test]
fn rho_sign_survives_half_hidden() {
    let data = apply_missing_mask(&chain_dataset(2, 0.6, 2000, 5), 0.5, 15).unwrap();
    let rho = fit_missing(&data, &Dag::chain(2), 8)
        .unwrap()
        .rho(1)
        .unwrap();
    assert!(rho > 0.0, "{rho}");
}

#[test]
fn bound_below_monte_carlo_likelihood_on_small_models() {
    let rule = NormalRule::new(8).unwrap();
    let dags = [
        Dag::chain(3),
        Dag::from_parents(vec![vec![], vec![0], vec![0, 1]]).unwrap(),
    ];
    for (d, dag) in dags.iter().enumerate() {
        let data = chain_dataset(3, 0.5, 300, 20 + d as u64);
        let base = fit_complete(&data, dag).unwrap();
        for hidden in [vec![0], vec![2], vec![0, 2]] {
            let row: Vec<Option<f64>> = (0..3)
                .map(|i| (!hidden.contains(&i)).then_some(data.raw_row(7)[i]))
                .collect();
            let bound = base.instance_lower_bound(&row, &rule);
            let (exact, se) = mc_log_likelihood(&base, &row, 50_000, 30 + d as u64);
            assert!(
                bound <= exact + 3.0 * se,
                "dag {d} hidden {hidden:?}: {bound} vs {exact} ± {se}"
            );
        }
    }
}

#[test]
fn bound_converges_in_quadrature_nodes() {
    let data = apply_missing_mask(&chain_dataset(3, 0.5, 300, 6), 0.4, 16).unwrap();
    let model = fit_missing(
        &data,
        &Dag::from_parents(vec![vec![], vec![0], vec![0, 1]]).unwrap(),
        8,
    )
    .unwrap();
    let (r8, r16) = (NormalRule::new(8).unwrap(), NormalRule::new(16).unwrap());
    for r in 0..data.num_rows() {
        let row = data.row(r);
        assert!(
            (model.instance_lower_bound(&row, &r8) - model.instance_lower_bound(&row, &r16)).abs()
                < 1e-4
        );
    }
}

#[test]
fn energy_check_with_independent_copulas_is_zero() {
    let model = chain_model(3, 0.5, 200, 7).with_independent_copulas();
    let check = model
        .energy_identity_check(&[None, Some(1.0), None], 1000, 1)
        .unwrap();
    assert_eq!(check.bound_term, 0.0);
    assert_eq!(check.energy_mc, 0.0);
}

#[test]
fn wine_model_round_trips_through_a_file() {
    let wine = load_wine();
    let dag = Dag::from_parents(
        (0..wine.num_cols())
            .map(|i| if i == 0 { vec![] } else { vec![i - 1] })
            .collect(),
    )
    .unwrap();
    let model = fit_complete(&wine, &dag).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wine.json");
    model_file::save(&Model::Cbn(model.clone()), &path).unwrap();
    let Model::Cbn(back) = model_file::load(&path).unwrap() else {
        panic!("wrong model kind")
    };
    for r in 0..100 {
        assert_abs_diff_eq!(
            back.log_density(wine.raw_row(r)),
            model.log_density(wine.raw_row(r)),
            epsilon = 1e-12
        );
    }
}

#[test]
fn bivariate_density_at_origin_matches_hand_formula() {
    // a dense symmetric sample standing in for a standard normal marginal
    let samples: Vec<f64> = (1..40_000)
        .map(|i| cbn::normal::quantile(i as f64 / 40_000.0))
        .collect();
    let kde = cbn::marginals::KdeMarginal::new(samples, 0.01).unwrap();
    let model = CbnModel::new(
        MaskedDataset::default_names(2),
        Dag::chain(2),
        vec![kde.clone(), kde.clone()],
        vec![None, Some(UniformGaussianCopula::new(2, 0.25).unwrap())],
    )
    .unwrap();
    // c(½, ½) = (1 − ρ²)^(−½)
    let hand = 2.0 * kde.ln_pdf(0.0) - 0.5 * (1.0 - 0.25f64 * 0.25).ln();
    assert_abs_diff_eq!(model.log_density(&[0.0, 0.0]), hand, epsilon = 1e-9);
}
