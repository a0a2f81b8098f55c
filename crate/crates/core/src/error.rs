use alloc::boxed::Box;

use crate::solver::Overlaps;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("correlation matrix is not symmetric: C[{row}][{col}] = {upper} but C[{col}][{row}] = {lower}")]
    NonSymmetric {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },

    #[error("correlation matrix must have unit diagonal: C[{index}][{index}] = {value}")]
    NonUnitDiagonal { index: usize, value: f64 },

    #[error(
        "correlation matrix is not positive definite: smallest eigenvalue {min_eigenvalue} \
         (largest {max_eigenvalue})"
    )]
    NotPositiveDefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("{field}[{index}] = {value} is out of range ({expected})")]
    OutOfRangeScalar {
        field: &'static str,
        index: usize,
        value: f64,
        expected: &'static str,
    },

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("input must be nonnegative, got {value}")]
    NegativeInput { value: f64 },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error(
        "fixed-point iteration did not converge after {} iterations (residual {})",
        .0.iterations,
        .0.residual
    )]
    NoConvergence(Box<Overlaps>),

    #[error("task {task} has a positive labeled fraction; the phase transition only exists for unsupervised ensembles")]
    NotUnsupervised { task: usize },

    #[error("{what} = {value} is out of range ({expected})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("dimension {dim} must exceed the number of tasks {tasks}")]
    DimensionTooSmall { dim: usize, tasks: usize },

    #[error("invalid size: {what}")]
    InvalidSize { what: &'static str },

    #[error("task {task} out of range for an ensemble of {tasks} tasks")]
    InvalidTask { task: usize, tasks: usize },

    #[error("task {task} has no labeled points")]
    EmptyTask { task: usize },

    #[error("task {task} has no labeled points to estimate parameters from")]
    NoLabeledData { task: usize },
}
