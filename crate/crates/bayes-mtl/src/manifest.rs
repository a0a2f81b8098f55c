use std::path::PathBuf;

use bayes_mtl_core::SolverOptions;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl From<SolverOptions> for SolverRecord {
    fn from(o: SolverOptions) -> Self {
        Self {
            damping: o.damping,
            tol: o.tol,
            max_iter: o.max_iter,
        }
    }
}

/// Provenance of one output file. `args` replays the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: Vec<String>,
    pub config: ConfigFile,
    pub seed: u64,
    pub solver: SolverRecord,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_secs: f64,
}
