//! Feasibility of unsupervised ensembles and phase-diagram scans.
//!
//! Linearizing the unsupervised fixed-point map at the trivial point gives
//! `q_u ≈ P q_v` with `P_ts = lambda_t lambda_s C_ts^2 alpha_s`, whose spectrum
//! equals that of the symmetric PSD matrix
//! `R_st = sqrt(alpha_s alpha_t) lambda_s lambda_t C_st^2`. Classification is
//! impossible iff every eigenvalue of `R` is at most one.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ValidatedEnsemble;
use crate::solver::{self, SolverOptions};

/// Spectra within this distance of 1 count as the boundary, reported
/// infeasible (weak inequality).
pub const BOUNDARY_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilitySpectrum {
    pub r: DMatrix<f64>,
    pub max_eigenvalue: f64,
    pub min_eigenvalue: f64,
}

impl FeasibilitySpectrum {
    pub fn is_feasible(&self) -> bool {
        self.max_eigenvalue > 1.0 + BOUNDARY_BAND
    }
}

/// Builds `R` and its extreme eigenvalues. Does not check supervision.
pub fn spectrum(ens: &ValidatedEnsemble) -> FeasibilitySpectrum {
    let t = ens.tasks();
    let (snr, alpha, c) = (ens.snr(), ens.alpha(), ens.correlation());
    let mut r = DMatrix::zeros(t, t);
    for s in 0..t {
        for u in s..t {
            let cst = c[(s, u)];
            let v = libm::sqrt(alpha[s] * alpha[u]) * snr[s] * snr[u] * cst * cst;
            r[(s, u)] = v;
            r[(u, s)] = v;
        }
    }
    let (min_eigenvalue, max_eigenvalue) = linalg::eigen_range(&r);
    FeasibilitySpectrum {
        r,
        max_eigenvalue,
        min_eigenvalue,
    }
}

/// Spectral feasibility of an unsupervised ensemble.
pub fn feasibility(ens: &ValidatedEnsemble) -> Result<(bool, FeasibilitySpectrum)> {
    if let Some(task) = ens.eta().iter().position(|&e| e != 0.0) {
        return Err(Error::NotUnsupervised { task });
    }
    let spec = spectrum(ens);
    Ok((spec.is_feasible(), spec))
}

fn check_unit(what: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value: v,
            expected: "[0, 1]",
        })
    }
}

/// Two unsupervised tasks with `alpha = (1, 1)`: the `lambda2` on the boundary
/// `(1 - l1^2)(1 - l2^2) = c^4 l1^2 l2^2` of the impossible region.
pub fn two_task_boundary(c: f64, lambda1: f64) -> Result<f64> {
    check_unit("c", c)?;
    check_unit("lambda1", lambda1)?;
    if c == 0.0 {
        return Ok(1.0);
    }
    let a = 1.0 - lambda1 * lambda1;
    let c4 = c * c * c * c;
    Ok(libm::sqrt(a / (a + c4 * lambda1 * lambda1)))
}

/// Closed-form impossibility for two tasks with `alpha = (1, 1)`.
pub fn two_task_impossible(c: f64, lambda1: f64, lambda2: f64) -> bool {
    let (a, b) = (lambda1 * lambda1, lambda2 * lambda2);
    lambda1 <= 1.0 && lambda2 <= 1.0 && (1.0 - a) * (1.0 - b) >= c * c * c * c * a * b
}

/// `T` tasks with common correlation `c`, common SNR and `alpha = 1`:
/// impossible iff `lambda <= 1 / sqrt(1 + (T - 1) c^2)`.
pub fn equal_correlation_threshold(tasks: usize, c: f64) -> Result<f64> {
    if tasks == 0 {
        return Err(Error::InvalidSize {
            what: "at least one task",
        });
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::OutOfRange {
            what: "c",
            value: c,
            expected: "(0, 1]",
        });
    }
    Ok(1.0 / libm::sqrt(1.0 + (tasks as f64 - 1.0) * c * c))
}

/// A sweepable ensemble parameter. Task indices are zero-based here and
/// one-based in the textual form (`lambda1`, `c12`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameter {
    Lambda(usize),
    Sigma(usize),
    Alpha(usize),
    Eta(usize),
    /// One off-diagonal entry `C_ij = C_ji`.
    Correlation(usize, usize),
    /// Every off-diagonal entry of `C`.
    CommonCorrelation,
}

impl Parameter {
    fn apply(&self, cfg: &mut crate::model::EnsembleConfig, value: f64) -> Result<()> {
        let t = cfg.tasks();
        let check = |i: usize| {
            if i < t {
                Ok(i)
            } else {
                Err(Error::InvalidTask { task: i, tasks: t })
            }
        };
        match *self {
            Parameter::Lambda(i) => cfg.snr[check(i)?] = value,
            Parameter::Sigma(i) => {
                let i = check(i)?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::OutOfRangeScalar {
                        field: "sigma",
                        index: i,
                        value,
                        expected: "0 < sigma < inf",
                    });
                }
                cfg.snr[i] = 1.0 / (value * value)
            }
            Parameter::Alpha(i) => cfg.alpha[check(i)?] = value,
            Parameter::Eta(i) => cfg.eta[check(i)?] = value,
            Parameter::Correlation(i, j) => {
                let (i, j) = (check(i)?, check(j)?);
                if i == j {
                    return Err(Error::InvalidTask { task: i, tasks: t });
                }
                cfg.correlation[(i, j)] = value;
                cfg.correlation[(j, i)] = value;
            }
            Parameter::CommonCorrelation => {
                for i in 0..t {
                    for j in 0..t {
                        if i != j {
                            cfg.correlation[(i, j)] = value;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseParameterError(pub String);

impl fmt::Display for ParseParameterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown sweep parameter `{}` (expected lambdaK, sigmaK, alphaK, etaK, cIJ or c)",
            self.0
        )
    }
}

impl core::error::Error for ParseParameterError {}

impl FromStr for Parameter {
    type Err = ParseParameterError;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let err = || ParseParameterError(s.into());
        let index = |digits: &str| -> core::result::Result<usize, ParseParameterError> {
            match digits.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(err()),
            }
        };
        if s == "c" {
            return Ok(Parameter::CommonCorrelation);
        }
        for (prefix, make) in [
            ("lambda", Parameter::Lambda as fn(usize) -> Parameter),
            ("sigma", Parameter::Sigma),
            ("alpha", Parameter::Alpha),
            ("eta", Parameter::Eta),
        ] {
            if let Some(rest) = s.strip_prefix(prefix) {
                return Ok(make(index(rest)?));
            }
        }
        if let Some(rest) = s.strip_prefix('c') {
            // `c12` or `c1_2`; the underscore form is needed past nine tasks.
            let (a, b) = match rest.split_once('_') {
                Some(pair) => pair,
                None if rest.len() == 2 => rest.split_at(1),
                None => return Err(err()),
            };
            return Ok(Parameter::Correlation(index(a)?, index(b)?));
        }
        Err(err())
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Parameter::Lambda(i) => write!(f, "lambda{}", i + 1),
            Parameter::Sigma(i) => write!(f, "sigma{}", i + 1),
            Parameter::Alpha(i) => write!(f, "alpha{}", i + 1),
            Parameter::Eta(i) => write!(f, "eta{}", i + 1),
            Parameter::Correlation(i, j) if i < 9 && j < 9 => write!(f, "c{}{}", i + 1, j + 1),
            Parameter::Correlation(i, j) => write!(f, "c{}_{}", i + 1, j + 1),
            Parameter::CommonCorrelation => f.write_str("c"),
        }
    }
}

/// A linear sweep `min, ..., max` with `steps` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(parameter: Parameter, min: f64, max: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidSize {
                what: "an axis needs at least one step",
            });
        }
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::OutOfRange {
                what: "axis bound",
                value: if min.is_finite() { max } else { min },
                expected: "finite",
            });
        }
        Ok(Self {
            parameter,
            min,
            max,
            steps,
        })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.steps == 1 {
            self.min
        } else if i + 1 == self.steps {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    /// One coordinate per axis.
    pub coords: Vec<f64>,
    /// Largest eigenvalue of `R`.
    pub mu: f64,
    pub feasible: bool,
    /// Per-task asymptotic Bayes risk, when requested.
    pub risk: Option<Vec<f64>>,
    /// False when the solver hit its iteration cap; `risk` then holds the
    /// last iterate's value.
    pub converged: bool,
}

/// Row-major over axes: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub axes: Vec<Axis>,
    pub cells: Vec<PhaseCell>,
}

impl PhaseGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.steps).collect()
    }
}

fn check_axes(axes: &[Axis]) -> Result<()> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::InvalidSize {
            what: "a scan sweeps one or two axes",
        });
    }
    Ok(())
}

/// Coordinates of every grid cell in row-major order.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let total: usize = axes.iter().map(|a| a.steps).product();
    (0..total)
        .map(|mut flat| {
            let mut coords = vec![0.0; axes.len()];
            for (k, axis) in axes.iter().enumerate().rev() {
                coords[k] = axis.value(flat % axis.steps);
                flat /= axis.steps;
            }
            coords
        })
        .collect()
}

/// The template with every axis parameter set to its coordinate, revalidated
/// under the template's definiteness policy.
pub fn apply_coordinates(
    template: &ValidatedEnsemble,
    axes: &[Axis],
    coords: &[f64],
) -> Result<ValidatedEnsemble> {
    let mut cfg = template.config().clone();
    for (axis, &v) in axes.iter().zip(coords) {
        axis.parameter.apply(&mut cfg, v)?;
    }
    cfg.validate_with(template.policy())
}

pub fn evaluate_cell(
    template: &ValidatedEnsemble,
    axes: &[Axis],
    coords: &[f64],
    with_risk: bool,
    opts: &SolverOptions,
) -> Result<PhaseCell> {
    let ens = apply_coordinates(template, axes, coords)?;
    let (feasible, spec) = feasibility(&ens)?;
    let (risk, converged) = if with_risk {
        let (overlaps, converged) = match solver::solve(&ens, opts) {
            Ok(o) => (o, true),
            Err(Error::NoConvergence(partial)) => (*partial, false),
            Err(e) => return Err(e),
        };
        (Some(solver::risk_from_overlaps(overlaps)?.risk), converged)
    } else {
        (None, true)
    };
    Ok(PhaseCell {
        coords: coords.to_vec(),
        mu: spec.max_eigenvalue,
        feasible,
        risk,
        converged,
    })
}

/// Sequential scan. Cells are independent; callers with a thread pool can map
/// [`evaluate_cell`] over [`grid_points`] and get the same grid.
pub fn scan(
    template: &ValidatedEnsemble,
    axes: &[Axis],
    with_risk: bool,
    opts: &SolverOptions,
) -> Result<PhaseGrid> {
    check_axes(axes)?;
    let cells = grid_points(axes)
        .iter()
        .map(|coords| evaluate_cell(template, axes, coords, with_risk, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseGrid {
        axes: axes.to_vec(),
        cells,
    })
}

/// Like [`scan`] but with cells supplied by the caller (e.g. evaluated in
/// parallel); checks the count and order.
pub fn assemble(axes: &[Axis], cells: Vec<PhaseCell>) -> Result<PhaseGrid> {
    check_axes(axes)?;
    let points = grid_points(axes);
    if points.len() != cells.len() || points.iter().zip(&cells).any(|(p, c)| *p != c.coords) {
        return Err(Error::InvalidSize {
            what: "cells do not match the grid",
        });
    }
    Ok(PhaseGrid {
        axes: axes.to_vec(),
        cells,
    })
}
