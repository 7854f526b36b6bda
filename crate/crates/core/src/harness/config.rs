use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{DetectabilityConfig, ProbBoundConfig};
use crate::boxset::BoxSet;
use crate::dynamics::{BatchReactor, NoiseSpec, TrueSystem};
use crate::error::{Error, Result};
use crate::gp::OptimizerOptions;
use crate::io::read_to_string;
use crate::linalg::is_positive_definite;
use crate::mhe::{MheConfig, SolverOptions};

/// The true system, selected by `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SystemConfig {
    BatchReactor(BatchReactor),
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::BatchReactor(BatchReactor::default())
    }
}

impl SystemConfig {
    fn inner(&self) -> &dyn TrueSystem {
        match self {
            SystemConfig::BatchReactor(r) => r,
        }
    }
}

impl TrueSystem for SystemConfig {
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner().output_dim()
    }
    fn transition(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        self.inner().transition(x, u)
    }
    fn output(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        self.inner().output(x, u)
    }
    fn transition_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        self.inner().transition_jacobian(x, u)
    }
    fn output_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        self.inner().output_jacobian(x, u)
    }
    fn lipschitz(&self, states: &BoxSet, inputs: &BoxSet) -> Option<(Vec<f64>, Vec<f64>)> {
        self.inner().lipschitz(states, inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_w: f64,
    pub sigma_v: f64,
}

/// A named subset of the offline trajectories used to train one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSet {
    /// Series name in plot output.
    pub label: String,
    /// Indices into `offline.initial_conditions`.
    pub trajectories: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfflineConfig {
    pub initial_conditions: Vec<Vec<f64>>,
    pub steps: usize,
    /// Master seed of the offline noise; trajectory `k` uses its own stream.
    pub seed: u64,
    pub sets: BTreeMap<String, ModelSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    pub initial_state: Vec<f64>,
    /// Estimator prior `x̂(0)`.
    pub initial_estimate: Vec<f64>,
    pub steps: usize,
    /// Inclusive `[t_start, t_end]` of the windowed RMSE.
    pub rmse_window: (usize, usize),
    /// Constant input applied online (empty for autonomous systems).
    #[serde(default)]
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MheSection {
    pub horizon: usize,
    pub eta: f64,
    #[serde(with = "crate::linalg::serde_rows")]
    pub p2: DMatrix<f64>,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    #[serde(with = "crate::linalg::serde_rows")]
    pub q0: DMatrix<f64>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub r0: DMatrix<f64>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub detectability: DetectabilityConfig,
    /// Points per axis of the `α_max` grid on `X × U`.
    pub alpha_resolution: Vec<usize>,
    pub probabilistic: ProbBoundConfig,
    #[serde(default)]
    pub input_lower: Vec<f64>,
    #[serde(default)]
    pub input_upper: Vec<f64>,
}

/// One file drives every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// `mb` for the exact-model baseline, otherwise names of `offline.sets`.
    pub estimators: Vec<String>,
    pub system: SystemConfig,
    pub noise: NoiseConfig,
    pub offline: OfflineConfig,
    pub online: OnlineConfig,
    pub mhe: MheSection,
    pub gp: GpSection,
    pub bounds: BoundsSection,
}

pub const MODEL_BASED: &str = "mb";

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ics = vec![
            vec![3.0, 1.0],
            vec![1.2, 4.5],
            vec![0.5, 3.5],
            vec![1.0, 3.0],
            vec![2.0, 4.0],
        ];
        let mut sets = BTreeMap::new();
        sets.insert(
            "gp5".to_string(),
            ModelSet {
                label: "GP MHE".into(),
                trajectories: vec![0, 1, 2, 3, 4],
            },
        );
        sets.insert(
            "gp3".to_string(),
            ModelSet {
                label: "GP MHE 3 traj".into(),
                trajectories: vec![2, 3, 4],
            },
        );
        ExperimentConfig {
            output_dir: PathBuf::from("out"),
            seeds: (0..20).collect(),
            estimators: vec![MODEL_BASED.into(), "gp5".into(), "gp3".into()],
            system: SystemConfig::default(),
            noise: NoiseConfig {
                sigma_w: 0.01,
                sigma_v: 0.1,
            },
            offline: OfflineConfig {
                initial_conditions: ics,
                steps: 30,
                seed: 1000,
                sets,
            },
            online: OnlineConfig {
                initial_state: vec![3.0, 1.0],
                initial_estimate: vec![4.0, 4.0],
                steps: 30,
                rmse_window: (10, 30),
                input: Vec::new(),
            },
            mhe: MheSection {
                horizon: 15,
                eta: 0.91,
                p2: DMatrix::identity(2, 2),
                state_lower: vec![0.1, 0.1],
                state_upper: vec![4.5, 4.5],
                solver: SolverOptions::default(),
            },
            gp: GpSection {
                q0: DMatrix::from_diagonal_element(2, 2, 1000.0),
                r0: DMatrix::from_element(1, 1, 100.0),
                optimizer: OptimizerOptions::default(),
            },
            bounds: BoundsSection {
                detectability: DetectabilityConfig::identity(2, 0.91),
                alpha_resolution: vec![45, 45],
                probabilistic: ProbBoundConfig {
                    tau: 0.1,
                    delta: 0.05,
                    lipschitz_f: None,
                    lipschitz_h: None,
                    grid_resolution: vec![45, 45],
                },
                input_lower: Vec::new(),
                input_upper: Vec::new(),
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::from_value(toml::from_str(s).map_err(|e| Error::config(e.to_string()))?)
    }

    fn from_value(v: toml::Value) -> Result<Self> {
        let cfg: ExperimentConfig = v
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` and applies `key.path=value` overrides, where the value
    /// is parsed as a TOML value (falling back to a string).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut value: toml::Value = toml::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    /// Applies overrides to an in-memory config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = toml::Value::try_from(self).map_err(|e| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        NoiseSpec {
            sigma_w: self.noise.sigma_w,
            sigma_v: self.noise.sigma_v,
            seed: 0,
        }
        .validate()?;
        let mhe = self.mhe_config()?;
        mhe.validate()?;
        if self.offline.initial_conditions.is_empty() {
            return Err(Error::config("offline.initial_conditions is empty"));
        }
        for ic in &self.offline.initial_conditions {
            if ic.len() != n {
                return Err(Error::config(format!(
                    "offline initial condition {ic:?} is not {n}-dimensional"
                )));
            }
        }
        for (name, set) in &self.offline.sets {
            if name == MODEL_BASED {
                return Err(Error::config(format!(
                    "model set name '{MODEL_BASED}' is reserved"
                )));
            }
            if set.trajectories.is_empty()
                || set
                    .trajectories
                    .iter()
                    .any(|&k| k >= self.offline.initial_conditions.len())
            {
                return Err(Error::config(format!(
                    "model set '{name}' has invalid trajectory indices"
                )));
            }
        }
        for e in &self.estimators {
            if e != MODEL_BASED && !self.offline.sets.contains_key(e) {
                return Err(Error::config(format!("unknown estimator '{e}'")));
            }
        }
        let on = &self.online;
        if on.initial_state.len() != n || on.initial_estimate.len() != n {
            return Err(Error::config(format!(
                "online initial state and estimate must be {n}-dimensional"
            )));
        }
        if !mhe.state_box.contains(&on.initial_estimate, 0.0) {
            return Err(Error::config(
                "online.initial_estimate lies outside the state box",
            ));
        }
        if on.input.len() != m {
            return Err(Error::config(format!("online.input must have {m} entries")));
        }
        if on.rmse_window.0 > on.rmse_window.1 || on.rmse_window.1 > on.steps {
            return Err(Error::config(
                "online.rmse_window must satisfy start <= end <= steps",
            ));
        }
        for (name, mat, dim) in [("gp.q0", &self.gp.q0, n), ("gp.r0", &self.gp.r0, p)] {
            if mat.shape() != (dim, dim) || !is_positive_definite(mat) {
                return Err(Error::config(format!(
                    "{name} must be a {dim}x{dim} positive definite matrix"
                )));
            }
        }
        self.bounds.detectability.validate()?;
        if self.bounds.detectability.p1.nrows() != n {
            return Err(Error::config(format!(
                "bounds.detectability matrices must be {n}x{n}"
            )));
        }
        self.bounds.probabilistic.validate()?;
        self.input_box()?;
        for (name, res) in [
            ("bounds.alpha_resolution", &self.bounds.alpha_resolution),
            (
                "bounds.probabilistic.grid_resolution",
                &self.bounds.probabilistic.grid_resolution,
            ),
        ] {
            if res.len() != n + m || res.contains(&0) {
                return Err(Error::config(format!(
                    "{name} needs {} positive entries",
                    n + m
                )));
            }
        }
        Ok(())
    }

    pub fn mhe_config(&self) -> Result<MheConfig> {
        Ok(MheConfig {
            horizon: self.mhe.horizon,
            eta: self.mhe.eta,
            p2: self.mhe.p2.clone(),
            state_box: BoxSet::new(self.mhe.state_lower.clone(), self.mhe.state_upper.clone())?,
            solver: self.mhe.solver.clone(),
        })
    }

    pub fn input_box(&self) -> Result<BoxSet> {
        let m = self.system.input_dim();
        if self.bounds.input_lower.len() != m || self.bounds.input_upper.len() != m {
            return Err(Error::config(format!(
                "bounds.input_lower/upper must have {m} entries"
            )));
        }
        if m == 0 {
            return Ok(BoxSet::empty());
        }
        BoxSet::new(
            self.bounds.input_lower.clone(),
            self.bounds.input_upper.clone(),
        )
    }

    pub fn offline_noise(&self) -> NoiseSpec {
        NoiseSpec {
            sigma_w: self.noise.sigma_w,
            sigma_v: self.noise.sigma_v,
            seed: self.offline.seed,
        }
    }

    pub fn online_noise(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            sigma_w: self.noise.sigma_w,
            sigma_v: self.noise.sigma_v,
            seed,
        }
    }

    /// Series label of an estimator.
    pub fn label(&self, estimator: &str) -> String {
        if estimator == MODEL_BASED {
            "MB MHE".to_string()
        } else {
            self.offline
                .sets
                .get(estimator)
                .map_or_else(|| estimator.to_string(), |s| s.label.clone())
        }
    }
}

/// Sets `a.b.c = value` inside a TOML document.
pub fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{spec}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::config(format!("override '{spec}' has an empty key")))?;
    let mut node = doc;
    for part in parts {
        node = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override '{spec}': '{part}' is not a table")))?
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    node.as_table_mut()
        .ok_or_else(|| Error::config(format!("override '{spec}': parent is not a table")))?
        .insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = ExperimentConfig::default()
            .with_overrides(&["mhe.horizon=10".into(), "noise.sigma_w = 0.0".into()])
            .unwrap();
        assert_eq!(cfg.mhe.horizon, 10);
        assert_eq!(cfg.noise.sigma_w, 0.0);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let base = ExperimentConfig::default();
        for o in [
            "mhe.eta=1.0",
            "seeds=[]",
            "offline.initial_conditions=[]",
            "estimators=[\"gp9\"]",
        ] {
            let err = base.with_overrides(&[o.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{o}: {err}");
        }
    }
}
