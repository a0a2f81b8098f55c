mod common;

use bayes_mtl_core::model::EnsembleConfig;
use bayes_mtl_core::phase::{self, Axis, Parameter};
use bayes_mtl_core::solver::SolverOptions;
use common::{corr2, rng, solve};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn pair(c: f64, l1: f64, l2: f64) -> bayes_mtl_core::ValidatedEnsemble {
    EnsembleConfig::with_snr(corr2(c), vec![l1, l2], vec![1.0, 1.0], vec![0.0, 0.0])
        .validate_semidefinite()
        .unwrap()
}

#[test]
fn spectral_and_solver_routes_agree() {
    let mut r = rng(0x5eed);
    for _ in 0..200 {
        let ens = common::away_from_boundary(&mut r, 1e-3);
        let (feasible, _) = phase::feasibility(&ens).unwrap();
        let sol = solve(&ens);
        assert_eq!(
            feasible,
            sol.q_u.iter().any(|&q| q > 0.0),
            "{ens:?} -> {sol:?}"
        );
    }
}

#[test]
fn r_is_positive_semidefinite() {
    let mut r = rng(0xa5);
    for _ in 0..200 {
        let ens = common::random_connected_unsupervised(&mut r);
        let s = phase::spectrum(&ens);
        assert!(s.min_eigenvalue >= -1e-10 * s.max_eigenvalue, "{s:?}");
    }
    let s = phase::spectrum(&pair(1.0, 0.8, 0.3));
    assert!(s.min_eigenvalue >= -1e-10 * s.max_eigenvalue);
}

proptest! {
    #[test]
    fn determinant_sign_matches_closed_form(c in 0.0f64..=1.0, l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0) {
        let s = phase::spectrum(&pair(c, l1, l2));
        let det = (DMatrix::identity(2, 2) - &s.r).determinant();
        let closed = (1.0 - l1 * l1) * (1.0 - l2 * l2) - c.powi(4) * l1 * l1 * l2 * l2;
        prop_assert!((det - closed).abs() < 1e-12);
        if closed.abs() > 1e-9 {
            prop_assert_eq!(s.is_feasible(), closed < 0.0);
            prop_assert_eq!(phase::two_task_impossible(c, l1, l2), closed > 0.0);
        }
    }

    #[test]
    fn relabeling_tasks_changes_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ens = common::random_connected_unsupervised(&mut r);
        let t = ens.tasks();
        let mut perm: Vec<usize> = (0..t).collect();
        perm.shuffle(&mut r);
        let c = DMatrix::from_fn(t, t, |i, j| ens.correlation()[(perm[i], perm[j])]);
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let permuted = EnsembleConfig::with_snr(c, pick(ens.snr()), pick(ens.alpha()), pick(ens.eta()))
            .validate()
            .unwrap();
        let a = phase::spectrum(&ens);
        let b = phase::spectrum(&permuted);
        prop_assert!((a.max_eigenvalue - b.max_eigenvalue).abs() < 1e-12 * (1.0 + a.max_eigenvalue));
        if (a.max_eigenvalue - 1.0).abs() > 1e-9 {
            prop_assert_eq!(a.is_feasible(), b.is_feasible());
        }
    }
}

fn bisect_mu_crossing(c: f64, l1: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phase::spectrum(&pair(c, l1, mid)).max_eigenvalue > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn boundary_location_matches_closed_form() {
    for c in [0.3, 0.7, 1.0] {
        for k in 0..20 {
            let l1 = 0.05 * k as f64;
            let spectral = bisect_mu_crossing(c, l1);
            let closed = phase::two_task_boundary(c, l1).unwrap();
            assert!(
                (spectral - closed).abs() < 1e-9,
                "c={c} l1={l1}: {spectral} vs {closed}"
            );
        }
    }
}

fn lambda_axes(steps: usize) -> Vec<Axis> {
    vec![
        Axis::new(Parameter::Lambda(0), 0.0, 3.0, steps).unwrap(),
        Axis::new(Parameter::Lambda(1), 0.0, 3.0, steps).unwrap(),
    ]
}

#[test]
fn two_task_scan_boundary() {
    let c = 0.7;
    let axes = lambda_axes(61);
    let grid = phase::scan(&pair(c, 1.0, 1.0), &axes, false, &SolverOptions::default()).unwrap();
    assert_eq!(grid.cells.len(), 61 * 61);
    assert_eq!(grid.shape(), vec![61, 61]);
    for cell in &grid.cells {
        let (l1, l2) = (cell.coords[0], cell.coords[1]);
        let closed_impossible = l1 <= 1.0
            && l2 <= 1.0
            && (1.0 - l1 * l1) * (1.0 - l2 * l2) >= c.powi(4) * l1 * l1 * l2 * l2;
        assert_eq!(
            cell.feasible, !closed_impossible,
            "({l1}, {l2}) mu={}",
            cell.mu
        );
    }
}

#[test]
fn impossible_region_shrinks_with_correlation() {
    let axes = lambda_axes(31);
    let masks: Vec<Vec<bool>> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&c| {
            phase::scan(&pair(c, 1.0, 1.0), &axes, false, &SolverOptions::default())
                .unwrap()
                .cells
                .iter()
                .map(|cell| cell.feasible)
                .collect()
        })
        .collect();
    for w in masks.windows(2) {
        assert!(w[0].iter().zip(&w[1]).all(|(a, b)| !a || *b));
        assert!(w[1].iter().filter(|&&f| f).count() > w[0].iter().filter(|&&f| f).count());
    }
}

#[test]
fn single_cell_grid() {
    let template = pair(0.7, 0.5, 0.5);
    let axes = vec![Axis::new(Parameter::Lambda(0), 2.0, 2.0, 1).unwrap()];
    let grid = phase::scan(&template, &axes, true, &SolverOptions::default()).unwrap();
    assert_eq!(grid.cells.len(), 1);
    let (feasible, spec) = phase::feasibility(&pair(0.7, 2.0, 0.5)).unwrap();
    assert_eq!(grid.cells[0].feasible, feasible);
    assert_eq!(grid.cells[0].mu, spec.max_eigenvalue);
    let risk = grid.cells[0].risk.as_ref().unwrap();
    assert!(risk.iter().all(|&r| r < 0.5));
}

#[test]
fn equal_correlation_threshold_flips_feasibility() {
    for t in [2usize, 3, 5] {
        for c in [0.3, 0.7, 1.0] {
            let thr = phase::equal_correlation_threshold(t, c).unwrap();
            let at = |l: f64| {
                let ens = EnsembleConfig::with_snr(
                    common::equicorrelated(t, c),
                    vec![l; t],
                    vec![1.0; t],
                    vec![0.0; t],
                )
                .validate_semidefinite()
                .unwrap();
                phase::feasibility(&ens).unwrap().0
            };
            assert!(!at(thr - 1e-6) && at(thr + 1e-6), "T={t} c={c} thr={thr}");
        }
    }
}
