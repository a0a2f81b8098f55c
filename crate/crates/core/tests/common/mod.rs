#![allow(dead_code)]

use bayes_mtl_core::model::{EnsembleConfig, ValidatedEnsemble};
use bayes_mtl_core::{phase, solver};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn corr2(c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0])
}

pub fn equicorrelated(t: usize, c: f64) -> DMatrix<f64> {
    DMatrix::from_fn(t, t, |i, j| if i == j { 1.0 } else { c })
}

/// Normalized Gram matrix of `t` Gaussian vectors in `t + 2` dimensions.
/// Almost surely dense and well conditioned.
pub fn dense_correlation(rng: &mut ChaCha8Rng, t: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(t, t + 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gram = &g * g.transpose();
    DMatrix::from_fn(t, t, |i, j| {
        if i == j {
            1.0
        } else {
            gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt()
        }
    })
}

/// Tridiagonal correlation: tasks linked in a chain, nothing else.
pub fn chain_correlation(rng: &mut ChaCha8Rng, t: usize) -> DMatrix<f64> {
    let mut c = DMatrix::identity(t, t);
    for i in 0..t.saturating_sub(1) {
        let mag = rng.random_range(0.1..0.49);
        let v = if rng.random::<bool>() { mag } else { -mag };
        c[(i, i + 1)] = v;
        c[(i + 1, i)] = v;
    }
    c
}

/// Unsupervised ensemble with connected tasks and random SNRs and ratios.
pub fn random_connected_unsupervised(rng: &mut ChaCha8Rng) -> ValidatedEnsemble {
    let t = rng.random_range(1..=4);
    let c = if rng.random::<bool>() {
        dense_correlation(rng, t)
    } else {
        chain_correlation(rng, t)
    };
    let snr = (0..t).map(|_| rng.random_range(0.05..2.5)).collect();
    let alpha = (0..t).map(|_| rng.random_range(0.2..2.0)).collect();
    EnsembleConfig::with_snr(c, snr, alpha, vec![0.0; t])
        .validate()
        .expect("random ensemble is valid")
}

/// Draws connected unsupervised ensembles until one is at least `margin`
/// away from the spectral boundary.
pub fn away_from_boundary(rng: &mut ChaCha8Rng, margin: f64) -> ValidatedEnsemble {
    loop {
        let ens = random_connected_unsupervised(rng);
        if (phase::spectrum(&ens).max_eigenvalue - 1.0).abs() > margin {
            return ens;
        }
    }
}

/// `diag(M - M (I + D M)^{-1})` through a general LU solve of the
/// unsymmetric system, i.e. `E[X X_hat]` of the linear estimator solving the
/// population normal equations.
pub fn normal_equations_overlap(m: &DMatrix<f64>, snr: &[f64]) -> Vec<f64> {
    let t = m.nrows();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(snr));
    let k = DMatrix::identity(t, t) + &d * m;
    let inv = k.lu().try_inverse().expect("I + D M invertible");
    let q = m - m * inv;
    (0..t).map(|i| q[(i, i)]).collect()
}

pub fn solve(ens: &ValidatedEnsemble) -> solver::Overlaps {
    solver::solve(ens, &solver::SolverOptions::default()).expect("solver converges")
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest entrywise difference.
pub fn max_abs(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
