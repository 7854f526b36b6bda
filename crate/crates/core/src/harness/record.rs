use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};

pub const RECORD_FORMAT: &str = "gpmhe-run";
pub const RECORD_VERSION: u32 = 1;

/// Solver statistics of one estimator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub name: String,
    pub label: String,
    /// `x̂(0) .. x̂(T)`.
    pub estimates: Vec<Vec<f64>>,
    /// Steps `1 .. T`.
    pub steps: Vec<StepStats>,
    pub rmse_window: f64,
    pub rmse_full: f64,
    /// Every estimate finite and inside the state box.
    pub in_box: bool,
}

/// Everything one seed of `estimate` produced, with the config it ran under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub truth: Trajectory,
    pub estimators: Vec<EstimatorRun>,
}

impl RunRecord {
    pub fn estimator(&self, name: &str) -> Option<&EstimatorRun> {
        self.estimators.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::numerical(format!("cannot encode run record: {e}")))
    }

    pub fn from_json(s: &str, origin: &Path) -> Result<Self> {
        let r: RunRecord = serde_json::from_str(s).map_err(|e| Error::Format {
            path: origin.into(),
            message: e.to_string(),
        })?;
        if r.format != RECORD_FORMAT || r.version != RECORD_VERSION {
            return Err(Error::Format {
                path: origin.into(),
                message: format!(
                    "expected {RECORD_FORMAT} v{RECORD_VERSION}, found {} v{}",
                    r.format, r.version
                ),
            });
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?, path)
    }
}

/// `sqrt(mean_t ‖x̂(t) − x(t)‖²)` over `t ∈ [from, to]`.
pub fn rmse(truth: &[Vec<f64>], estimates: &[Vec<f64>], from: usize, to: usize) -> f64 {
    let to = to.min(truth.len().min(estimates.len()).saturating_sub(1));
    if from > to {
        return f64::NAN;
    }
    let sum: f64 = (from..=to)
        .map(|t| {
            truth[t]
                .iter()
                .zip(&estimates[t])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum();
    (sum / (to - from + 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_constant_offset() {
        let truth = vec![vec![0.0, 0.0]; 4];
        let est = vec![vec![3.0, 4.0]; 4];
        assert_eq!(rmse(&truth, &est, 0, 3), 5.0);
        assert_eq!(rmse(&truth, &est, 2, 2), 5.0);
        assert!(rmse(&truth, &est, 3, 2).is_nan());
    }
}
