//! File formats, configuration and parallel drivers for `bayes-mtl-core`.

pub mod config;
pub mod error;
pub mod format;
pub mod manifest;
pub mod output;
pub mod run;

pub use error::{Error, Result};
