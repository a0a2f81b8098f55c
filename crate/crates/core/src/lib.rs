//! Asymptotic Bayes risk of semi-supervised multitask classification on
//! correlated two-class Gaussian mixtures.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod channels;
pub mod error;
pub mod linalg;
pub mod model;
pub mod phase;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{Definiteness, EffectiveMatrices, EnsembleConfig, ValidatedEnsemble};
pub use phase::{Axis, FeasibilitySpectrum, Parameter, PhaseCell, PhaseGrid};
pub use solver::{Overlaps, RiskReport, SolverOptions};
