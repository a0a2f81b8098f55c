//! JSON ensemble configuration.
//!
//! ```json
//! {"C": [[1, 0.7], [0.7, 1]], "lambda": [2, 0.5], "alpha": [1, 1], "eta": [0, 0]}
//! ```
//!
//! Exactly one of `sigma` and `lambda` must be present. `seed`, `tol`,
//! `damping` and `max_iter` are optional defaults that command-line flags
//! override.

use std::path::Path;

use bayes_mtl_core::model::{Definiteness, EnsembleConfig, ValidatedEnsemble};
use bayes_mtl_core::SolverOptions;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "C")]
    pub correlation: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn tasks(&self) -> usize {
        self.alpha.len()
    }

    pub fn to_ensemble(&self) -> Result<EnsembleConfig> {
        let t = self.tasks();
        let check_len = |field: &str, len: usize| {
            if len == t {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "\"{field}\" has {len} entries but \"alpha\" has {t}"
                )))
            }
        };
        check_len("eta", self.eta.len())?;
        check_len("C", self.correlation.len())?;
        for (i, row) in self.correlation.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Config(format!(
                    "\"C\" row {} has {} entries, expected {t}",
                    i + 1,
                    row.len()
                )));
            }
        }
        let c = DMatrix::from_fn(t, t, |i, j| self.correlation[i][j]);
        match (&self.sigma, &self.lambda) {
            (Some(sigma), None) => {
                check_len("sigma", sigma.len())?;
                Ok(EnsembleConfig::with_sigma(
                    c,
                    sigma,
                    self.alpha.clone(),
                    self.eta.clone(),
                )?)
            }
            (None, Some(lambda)) => {
                check_len("lambda", lambda.len())?;
                Ok(EnsembleConfig::with_snr(
                    c,
                    lambda.clone(),
                    self.alpha.clone(),
                    self.eta.clone(),
                ))
            }
            (Some(_), Some(_)) => Err(Error::Config(
                "give exactly one of \"sigma\" and \"lambda\", not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "missing noise level: give \"sigma\" or \"lambda\"".into(),
            )),
        }
    }

    pub fn validate(&self, policy: Definiteness) -> Result<ValidatedEnsemble> {
        Ok(self.to_ensemble()?.validate_with(policy)?)
    }

    /// Canonical form of an ensemble (`lambda`, no optional fields).
    pub fn from_ensemble(cfg: &EnsembleConfig) -> Self {
        let t = cfg.tasks();
        Self {
            correlation: (0..t)
                .map(|i| (0..t).map(|j| cfg.correlation[(i, j)]).collect())
                .collect(),
            sigma: None,
            lambda: Some(cfg.snr.clone()),
            alpha: cfg.alpha.clone(),
            eta: cfg.eta.clone(),
            seed: None,
            tol: None,
            damping: None,
            max_iter: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub damping: Option<f64>,
    pub max_iter: Option<usize>,
}

impl Overrides {
    pub fn seed(&self, file: &ConfigFile) -> u64 {
        self.seed.or(file.seed).unwrap_or(0)
    }

    pub fn solver(&self, file: &ConfigFile) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            damping: self.damping.or(file.damping).unwrap_or(d.damping),
            tol: self.tol.or(file.tol).unwrap_or(d.tol),
            max_iter: self.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
        }
    }
}
