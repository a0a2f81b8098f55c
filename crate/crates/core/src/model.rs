//! Ensemble parameters of the multitask Gaussian mixture and the derived
//! matrices shared by the solver, the phase analysis and the simulator.
//!
//! Task `t` draws points `Y = V U_t + sigma_t Z` with `V` uniform on {-1, +1},
//! `||U_t|| = 1` and `<U_t, U_s> = C[t][s]`. The ensemble is described by the
//! task-correlation matrix `C`, the per-task SNR `lambda_t = 1 / sigma_t^2`,
//! the sampling ratios `alpha_t = N_t / D` and the labeled fractions `eta_t`.
//!
//! The SNR is stored rather than `sigma` so that the no-signal limit
//! `lambda_t = 0` (an axis end point of the usual phase diagrams) is
//! representable.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-12;
/// Relative eigenvalue floor for definiteness checks.
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Raw, unchecked ensemble parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    /// Task-correlation matrix `C` (T×T).
    pub correlation: DMatrix<f64>,
    /// Per-task SNR `lambda_t = 1 / sigma_t^2`.
    pub snr: Vec<f64>,
    /// Sampling ratios `alpha_t = lim N_t / D`.
    pub alpha: Vec<f64>,
    /// Labeled fractions `eta_t`.
    pub eta: Vec<f64>,
}

/// How strictly the correlation matrix is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    /// `C` positive definite: the generative model's requirement.
    Positive,
    /// `C` positive semidefinite. Admits identical tasks (`C_ts = 1`), the
    /// limit in which an ensemble collapses to a single task.
    Semidefinite,
}

impl EnsembleConfig {
    pub fn with_snr(
        correlation: DMatrix<f64>,
        snr: Vec<f64>,
        alpha: Vec<f64>,
        eta: Vec<f64>,
    ) -> Self {
        Self {
            correlation,
            snr,
            alpha,
            eta,
        }
    }

    /// Builds a config from noise scales. Fails unless every `sigma_t` is
    /// positive and finite.
    pub fn with_sigma(
        correlation: DMatrix<f64>,
        sigma: &[f64],
        alpha: Vec<f64>,
        eta: Vec<f64>,
    ) -> Result<Self> {
        let snr = sigma
            .iter()
            .enumerate()
            .map(|(index, &s)| {
                if s > 0.0 && s.is_finite() {
                    Ok(1.0 / (s * s))
                } else {
                    Err(Error::OutOfRangeScalar {
                        field: "sigma",
                        index,
                        value: s,
                        expected: "0 < sigma < inf",
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_snr(correlation, snr, alpha, eta))
    }

    /// Single task with the given SNR, sampling ratio and labeled fraction.
    pub fn single(snr: f64, alpha: f64, eta: f64) -> Self {
        Self::with_snr(
            DMatrix::identity(1, 1),
            alloc::vec![snr],
            alloc::vec![alpha],
            alloc::vec![eta],
        )
    }

    pub fn tasks(&self) -> usize {
        self.snr.len()
    }

    /// Noise scales `sigma_t = lambda_t^{-1/2}` (infinite where `lambda_t = 0`).
    pub fn sigma(&self) -> Vec<f64> {
        self.snr.iter().map(|&l| 1.0 / libm::sqrt(l)).collect()
    }

    /// Validates with a positive-definite correlation matrix.
    pub fn validate(self) -> Result<ValidatedEnsemble> {
        self.validate_with(Definiteness::Positive)
    }

    /// Validates allowing a singular (but PSD) correlation matrix.
    pub fn validate_semidefinite(self) -> Result<ValidatedEnsemble> {
        self.validate_with(Definiteness::Semidefinite)
    }

    pub fn validate_with(self, policy: Definiteness) -> Result<ValidatedEnsemble> {
        let t = self.tasks();
        if t == 0 {
            return Err(Error::InvalidSize {
                what: "an ensemble needs at least one task",
            });
        }
        for (what, found) in [
            ("alpha", self.alpha.len()),
            ("eta", self.eta.len()),
            ("C rows", self.correlation.nrows()),
            ("C columns", self.correlation.ncols()),
        ] {
            if found != t {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: t,
                    found,
                });
            }
        }
        check_scalars("lambda", &self.snr, "0 <= lambda < inf", |v| {
            v >= 0.0 && v.is_finite()
        })?;
        check_scalars("alpha", &self.alpha, "0 < alpha < inf", |v| {
            v > 0.0 && v.is_finite()
        })?;
        check_scalars("eta", &self.eta, "0 <= eta <= 1", |v| {
            (0.0..=1.0).contains(&v)
        })?;

        let c = &self.correlation;
        for row in 0..t {
            let d = c[(row, row)];
            if d.is_nan() || (d - 1.0).abs() > DIAGONAL_TOL {
                return Err(Error::NonUnitDiagonal {
                    index: row,
                    value: d,
                });
            }
            for col in (row + 1)..t {
                let (upper, lower) = (c[(row, col)], c[(col, row)]);
                if upper.is_nan() || lower.is_nan() || (upper - lower).abs() > SYMMETRY_TOL {
                    return Err(Error::NonSymmetric {
                        row,
                        col,
                        upper,
                        lower,
                    });
                }
            }
        }

        let (min_eigenvalue, max_eigenvalue) = linalg::eigen_range(c);
        let floor = DEFINITENESS_TOL * max_eigenvalue;
        let definite = match policy {
            Definiteness::Positive => min_eigenvalue > floor,
            Definiteness::Semidefinite => min_eigenvalue >= -floor,
        };
        if !definite {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue,
                max_eigenvalue,
            });
        }
        for row in 0..t {
            for col in 0..t {
                let v = c[(row, col)];
                if v.is_nan() || v.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::OutOfRangeScalar {
                        field: "C",
                        index: row * t + col,
                        value: v,
                        expected: "|C| <= 1",
                    });
                }
            }
        }

        Ok(ValidatedEnsemble {
            config: self,
            policy,
            min_eigenvalue,
        })
    }
}

fn check_scalars(
    field: &'static str,
    values: &[f64],
    expected: &'static str,
    ok: impl Fn(f64) -> bool,
) -> Result<()> {
    match values.iter().position(|&v| !ok(v)) {
        Some(index) => Err(Error::OutOfRangeScalar {
            field,
            index,
            value: values[index],
            expected,
        }),
        None => Ok(()),
    }
}

/// An ensemble whose parameters passed validation. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedEnsemble {
    config: EnsembleConfig,
    policy: Definiteness,
    min_eigenvalue: f64,
}

impl ValidatedEnsemble {
    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn into_config(self) -> EnsembleConfig {
        self.config
    }

    pub fn policy(&self) -> Definiteness {
        self.policy
    }

    /// Smallest eigenvalue of `C` found during validation.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn tasks(&self) -> usize {
        self.config.tasks()
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.config.correlation
    }

    pub fn snr(&self) -> &[f64] {
        &self.config.snr
    }

    pub fn alpha(&self) -> &[f64] {
        &self.config.alpha
    }

    pub fn eta(&self) -> &[f64] {
        &self.config.eta
    }

    /// True when no task has labeled data.
    pub fn is_unsupervised(&self) -> bool {
        self.config.eta.iter().all(|&e| e == 0.0)
    }

    /// Re-runs validation under the same policy.
    pub fn revalidate(&self) -> Result<ValidatedEnsemble> {
        self.config.clone().validate_with(self.policy)
    }

    pub fn effective_matrices(&self) -> EffectiveMatrices {
        effective_matrices(self)
    }
}

/// `M = D_{1/sigma} C D_{1/sigma}` and the SNR vector `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMatrices {
    pub m: DMatrix<f64>,
    pub lambda: Vec<f64>,
}

pub fn effective_matrices(ens: &ValidatedEnsemble) -> EffectiveMatrices {
    let snr = ens.snr();
    let t = snr.len();
    let scale: Vec<f64> = snr.iter().map(|&l| libm::sqrt(l)).collect();
    let c = ens.correlation();
    let mut m = DMatrix::zeros(t, t);
    for i in 0..t {
        m[(i, i)] = snr[i];
        for j in (i + 1)..t {
            let v = c[(i, j)] * scale[i] * scale[j];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    EffectiveMatrices {
        m,
        lambda: snr.to_vec(),
    }
}
