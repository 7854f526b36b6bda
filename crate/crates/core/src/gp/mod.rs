//! Exact Gaussian-process regression for a single scalar output with the
//! squared-exponential ARD kernel.
//!
//! Noise convention: the signal kernel `σ_f² exp(-½ Δᵀ Λ⁻¹ Δ)` never carries
//! a noise term. `σ_ε²` enters the training Gram diagonal once and the prior
//! variance at a test point, so the far-field posterior variance is
//! `σ_f² + σ_ε²`.

mod io;
mod kernel;
mod likelihood;
mod trained;

pub use kernel::{gram_matrix, kernel_eval, JITTER_MAX, JITTER_START};
pub use likelihood::{log_marginal_likelihood, optimize_hyperparameters, OptimizerOptions};
pub use trained::{fit, TrainedGp};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel hyperparameters of one GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma_f: f64,
    pub lengthscales: Vec<f64>,
    pub sigma_eps: f64,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>, sigma_eps: f64) -> Result<Self> {
        let h = Hyperparameters {
            sigma_f,
            lengthscales,
            sigma_eps,
        };
        h.validate()?;
        Ok(h)
    }

    /// Same lengthscale on every axis.
    pub fn isotropic(sigma_f: f64, lengthscale: f64, dim: usize, sigma_eps: f64) -> Result<Self> {
        Self::new(sigma_f, vec![lengthscale; dim], sigma_eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f.is_finite() && self.sigma_f >= 0.0) {
            return Err(Error::contract(format!(
                "sigma_f must be finite and >= 0, got {}",
                self.sigma_f
            )));
        }
        if !(self.sigma_eps.is_finite() && self.sigma_eps >= 0.0) {
            return Err(Error::contract(format!(
                "sigma_eps must be finite and >= 0, got {}",
                self.sigma_eps
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::contract("at least one lengthscale is required"));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::contract(format!(
                "lengthscales must be finite and > 0, got {l}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Upper bound of the posterior variance, `σ_f² + σ_ε²`.
    pub fn max_variance(&self) -> f64 {
        self.sigma_f * self.sigma_f + self.sigma_eps * self.sigma_eps
    }

    pub(crate) fn inverse_squared_lengthscales(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect()
    }

    /// `(log σ_f, log φ_1, .., log φ_nd, log σ_ε)`.
    pub fn to_log_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.dim() + 2);
        p.push(self.sigma_f.ln());
        p.extend(self.lengthscales.iter().map(|l| l.ln()));
        p.push(self.sigma_eps.ln());
        p
    }

    pub fn from_log_params(p: &[f64]) -> Result<Self> {
        if p.len() < 3 {
            return Err(Error::contract(
                "log-parameter vector needs at least 3 entries",
            ));
        }
        let n = p.len();
        Self::new(
            p[0].exp(),
            p[1..n - 1].iter().map(|v| v.exp()).collect(),
            p[n - 1].exp(),
        )
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("hyperparameters always serialize")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let h: Hyperparameters =
            toml::from_str(s).map_err(|e| Error::config(format!("hyperparameters: {e}")))?;
        h.validate()?;
        Ok(h)
    }
}

/// Regression data: `N` inputs of dimension `n_d` and their scalar targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRecord", into = "DatasetRecord")]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl TryFrom<DatasetRecord> for Dataset {
    type Error = Error;
    fn try_from(r: DatasetRecord) -> Result<Self> {
        Dataset::new(r.inputs, r.outputs)
    }
}

impl From<Dataset> for DatasetRecord {
    fn from(d: Dataset) -> Self {
        DatasetRecord {
            inputs: d.inputs,
            outputs: d.outputs,
        }
    }
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::contract("dataset needs at least one sample"));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::contract(format!(
                "dataset has {} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(Error::contract("dataset inputs must have dimension >= 1"));
        }
        for (i, d) in inputs.iter().enumerate() {
            if d.len() != dim {
                return Err(Error::contract(format!(
                    "dataset input {i} has dimension {}, expected {dim}",
                    d.len()
                )));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!("dataset input {i} is not finite")));
            }
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset outputs must be finite"));
        }
        Ok(Dataset { inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Appends one sample, checking it against the existing dimension.
    pub fn push(&mut self, input: Vec<f64>, output: f64) -> Result<()> {
        crate::error::ensure_dim("dataset input", self.dim(), input.len())?;
        if input.iter().any(|v| !v.is_finite()) || !output.is_finite() {
            return Err(Error::contract("dataset sample must be finite"));
        }
        self.inputs.push(input);
        self.outputs.push(output);
        Ok(())
    }
}
