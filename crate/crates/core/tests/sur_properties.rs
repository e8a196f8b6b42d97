mod common;

use nalgebra::DVector;

use common::{dense_gls, max_abs_diff, max_rel_diff, random_fixture, random_system, rng, system_from, Shape};
use evstud::benchmark::{fit_ols, BenchmarkModel, DesignConfig};
use evstud::data::EventWindow;
use evstud::sur::{assemble_system, fit_sur, SurOptions, SurSystem};
use evstud::Error;

fn flat(v: &[DVector<f64>]) -> Vec<f64> {
    v.iter().flat_map(|c| c.iter().cloned()).collect()
}

fn ols_flat(system: &SurSystem) -> Vec<f64> {
    system.ols.iter().flat_map(|e| e.coefficients.iter().cloned()).collect()
}

#[test]
fn matches_dense_stacked_gls() {
    let mut g = rng(1);
    let system = random_system(&mut g, 2, 50, 0.5, EventWindow::car_default(), BenchmarkModel::Ff3);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    let dense = dense_gls(&system, &system.sigma_hat);
    assert!(max_abs_diff(&flat(&sur.coefficients), &flat(&dense)) < 1e-9);
    let cov = sur.joint_covariance();
    assert!(cov.clone().cholesky().is_some());
    assert!((&cov - cov.transpose()).amax() < 1e-14);
    let block = sur.equation_covariance(1);
    let k0 = sur.coefficients[0].len();
    let k1 = sur.coefficients[1].len();
    assert!((&block - cov.view((k0, k0), (k1, k1))).amax() < 1e-12 * cov.amax());
}

#[test]
fn diagonal_sigma_reduces_to_ols() {
    let system = random_system(&mut rng(2), 4, 80, 0.5, EventWindow::car_default(), BenchmarkModel::Ff3).diagonal_sigma();
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    assert!(max_rel_diff(&flat(&sur.coefficients), &ols_flat(&system)) < 1e-8);
}

#[test]
fn identical_regressors_reduce_to_ols() {
    let shape = Shape { firms: (3, 3), days: (90, 90), events_per_firm: (1, 1), missing: 0.0 };
    let fx = random_fixture(&mut rng(3), &shape, EventWindow::car_default());
    let system = system_from(&fx, BenchmarkModel::Ff3, &[]);
    assert!(system.sigma_hat[(0, 1)] != 0.0);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    assert!(max_rel_diff(&flat(&sur.coefficients), &ols_flat(&system)) < 1e-8);
}

#[test]
fn single_equation_is_ols() {
    let system = random_system(&mut rng(4), 1, 60, 0.0, EventWindow::car_default(), BenchmarkModel::Zero);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    assert!(max_rel_diff(&flat(&sur.coefficients), &ols_flat(&system)) < 1e-10);
}

#[test]
fn independent_noise_gives_small_offdiagonal() {
    let system = random_system(&mut rng(5), 2, 2000, 0.0, EventWindow::car_default(), BenchmarkModel::Ff3);
    assert!(system.mean_offdiag_correlation().abs() < 0.06);
}

#[test]
fn iteration_converging_at_once_equals_one_step() {
    let shape = Shape { firms: (3, 3), days: (90, 90), events_per_firm: (1, 1), missing: 0.0 };
    let fx = random_fixture(&mut rng(6), &shape, EventWindow::car_default());
    let system = system_from(&fx, BenchmarkModel::Ff3, &[]);
    let one = fit_sur(&system, &SurOptions::default()).unwrap();
    let it = fit_sur(&system, &SurOptions { iterate: true, tol: 1e-8, max_iter: 50 }).unwrap();
    assert_eq!(it.iterations, 1);
    assert!(it.converged);
    assert_eq!(flat(&one.coefficients), flat(&it.coefficients));
}

#[test]
fn iterated_fgls_converges() {
    let system = random_system(&mut rng(7), 3, 100, 0.5, EventWindow::car_default(), BenchmarkModel::Ff3);
    let it = fit_sur(&system, &SurOptions { iterate: true, tol: 1e-12, max_iter: 200 }).unwrap();
    assert!(it.converged);
    assert!(it.iterations > 1);
    let dense = dense_gls(&system, &it.sigma_hat);
    assert!(max_abs_diff(&flat(&it.coefficients), &flat(&dense)) < 1e-6);
}

#[test]
fn gls_variances_do_not_exceed_ols_variances() {
    let system = random_system(&mut rng(8), 3, 100, 0.6, EventWindow::car_default(), BenchmarkModel::Ff3);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    for (i, ols) in system.ols.iter().enumerate() {
        let gls = sur.equation_covariance(i);
        let s_ii = system.sigma_hat[(i, i)];
        for k in 0..gls.nrows() {
            assert!(gls[(k, k)] <= s_ii * ols.xtx_inverse[(k, k)] * (1.0 + 1e-10));
        }
    }
}

#[test]
fn permuting_equations_permutes_results() {
    let system = random_system(&mut rng(9), 3, 80, 0.4, EventWindow::car_default(), BenchmarkModel::Ff3);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    let order = [2usize, 0, 1];
    let designs = order.iter().map(|&i| system.designs[i].clone()).collect();
    let returns = order.iter().map(|&i| system.returns[i].clone()).collect();
    let permuted = SurSystem::from_designs(designs, returns).unwrap();
    let sur_p = fit_sur(&permuted, &SurOptions::default()).unwrap();
    for (p, &i) in order.iter().enumerate() {
        assert!(max_abs_diff(sur_p.coefficients[p].as_slice(), sur.coefficients[i].as_slice()) < 1e-10);
    }
}

#[test]
fn unbalanced_panel_is_a_contract_error() {
    let shape = Shape { firms: (3, 3), days: (150, 150), events_per_firm: (1, 1), missing: 0.05 };
    let fx = random_fixture(&mut rng(10), &shape, EventWindow::car_default());
    let r = assemble_system(&fx.panel, &fx.factors, &fx.events, fx.window, BenchmarkModel::Ff3, &DesignConfig { min_obs: 20, ..DesignConfig::default() });
    assert!(matches!(r, Err(Error::Contract(_))));
}

#[test]
fn sur_estimates_share_the_ols_layout() {
    let system = random_system(&mut rng(12), 3, 80, 0.4, EventWindow::car_default(), BenchmarkModel::Ff3);
    let sur = fit_sur(&system, &SurOptions::default()).unwrap();
    for (est, ols) in sur.estimates.iter().zip(&system.ols) {
        assert_eq!(est.columns, ols.columns);
        assert_eq!(est.event_days.len(), ols.event_days.len());
        assert_eq!(est.dof, ols.dof);
        let refit = fit_ols(&system.designs[0], &system.returns[0]).unwrap();
        assert_eq!(refit.coefficients, system.ols[0].coefficients);
    }
}
