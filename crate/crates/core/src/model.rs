//! Learned state-space model: `n` GPs for the transition components and `p`
//! GPs for the output components, all on the regression input
//! `d = [x_1..x_n, u_1..u_m]`, plus the variance-dependent MHE weights.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{ensure_dim, Error, Result};
use crate::gp::{fit, optimize_hyperparameters, Dataset, OptimizerOptions, TrainedGp};
use crate::io::{read_to_string, write_atomic};
use crate::linalg::{from_rows, is_positive_definite, to_rows};

#[derive(Debug, Clone)]
pub struct GpStateSpaceModel {
    state_gps: Vec<TrainedGp>,
    output_gps: Vec<TrainedGp>,
    n: usize,
    m: usize,
    p: usize,
    q0: DMatrix<f64>,
    r0: DMatrix<f64>,
}

/// Inverse weight matrices bracketing every `Q_d⁻¹`, `R_d⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalWeights {
    pub q_min_inv: DMatrix<f64>,
    pub q_max_inv: DMatrix<f64>,
    pub r_min_inv: DMatrix<f64>,
    pub r_max_inv: DMatrix<f64>,
}

/// Regression datasets built from trajectories: for state component `i` the
/// targets are `x_i(t+1)`, for output component `j` they are `y_j(t)`, both on
/// inputs `d(t)`.
pub fn regression_datasets(trajectories: &[Trajectory]) -> Result<(Vec<Dataset>, Vec<Dataset>)> {
    let first = trajectories
        .iter()
        .find(|t| t.steps() > 0)
        .ok_or_else(|| Error::config("training data contains no transitions"))?;
    let (n, m, p) = (first.state_dim(), first.input_dim(), first.output_dim());
    let mut inputs = Vec::new();
    let mut next = vec![Vec::new(); n];
    let mut outs = vec![Vec::new(); p];
    for tr in trajectories {
        tr.validate()?;
        if tr.steps() == 0 {
            continue;
        }
        if tr.state_dim() != n || tr.input_dim() != m || tr.output_dim() != p {
            return Err(Error::contract(
                "training trajectories have inconsistent dimensions",
            ));
        }
        for t in 0..tr.steps() {
            let d: Vec<f64> = tr.states[t].iter().chain(&tr.inputs[t]).copied().collect();
            inputs.push(d);
            for (col, &x) in next.iter_mut().zip(&tr.states[t + 1]) {
                col.push(x);
            }
            for (col, &y) in outs.iter_mut().zip(&tr.outputs[t]) {
                col.push(y);
            }
        }
    }
    let make = |targets: Vec<Vec<f64>>| -> Result<Vec<Dataset>> {
        targets
            .into_iter()
            .map(|y| Dataset::new(inputs.clone(), y))
            .collect()
    };
    Ok((make(next)?, make(outs)?))
}

/// Fits and tunes the `n + p` GPs independently. Component `k` (states first,
/// then outputs) runs its restarts with seed `opts.seed + k`.
pub fn train_state_space_model(
    trajectories: &[Trajectory],
    q0: DMatrix<f64>,
    r0: DMatrix<f64>,
    opts: &OptimizerOptions,
) -> Result<GpStateSpaceModel> {
    let (state_sets, output_sets) = regression_datasets(trajectories)?;
    let first = trajectories
        .iter()
        .find(|t| t.steps() > 0)
        .expect("checked above");
    let (n, m, _) = (first.state_dim(), first.input_dim(), first.output_dim());
    let all: Vec<&Dataset> = state_sets.iter().chain(&output_sets).collect();
    let gps: Vec<TrainedGp> = all
        .into_par_iter()
        .enumerate()
        .map(|(k, ds)| {
            let opts = OptimizerOptions {
                seed: opts.seed.wrapping_add(k as u64),
                ..opts.clone()
            };
            let hyper = optimize_hyperparameters(ds, &opts)?;
            log::info!(
                "component {k}: sigma_f = {:.4e}, lengthscales = {:?}, sigma_eps = {:.4e}",
                hyper.sigma_f,
                hyper.lengthscales,
                hyper.sigma_eps
            );
            fit(ds, &hyper)
        })
        .collect::<Result<_>>()?;
    let mut gps = gps.into_iter();
    let state_gps: Vec<TrainedGp> = gps.by_ref().take(n).collect();
    let output_gps: Vec<TrainedGp> = gps.collect();
    GpStateSpaceModel::from_parts(state_gps, output_gps, m, q0, r0)
}

impl GpStateSpaceModel {
    /// Assembles a model from already fitted GPs.
    pub fn from_parts(
        state_gps: Vec<TrainedGp>,
        output_gps: Vec<TrainedGp>,
        input_dim: usize,
        q0: DMatrix<f64>,
        r0: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, p) = (state_gps.len(), output_gps.len());
        if n == 0 || p == 0 {
            return Err(Error::config(
                "model needs at least one state GP and one output GP",
            ));
        }
        for gp in state_gps.iter().chain(&output_gps) {
            ensure_dim("GP regression input", n + input_dim, gp.dim())?;
        }
        if q0.shape() != (n, n) || !is_positive_definite(&q0) {
            return Err(Error::config(format!(
                "Q0 must be a {n}x{n} symmetric positive definite matrix"
            )));
        }
        if r0.shape() != (p, p) || !is_positive_definite(&r0) {
            return Err(Error::config(format!(
                "R0 must be a {p}x{p} symmetric positive definite matrix"
            )));
        }
        Ok(GpStateSpaceModel {
            state_gps,
            output_gps,
            n,
            m: input_dim,
            p,
            q0,
            r0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }
    pub fn input_dim(&self) -> usize {
        self.m
    }
    pub fn output_dim(&self) -> usize {
        self.p
    }
    pub fn state_gps(&self) -> &[TrainedGp] {
        &self.state_gps
    }
    pub fn output_gps(&self) -> &[TrainedGp] {
        &self.output_gps
    }
    pub fn q0(&self) -> &DMatrix<f64> {
        &self.q0
    }
    pub fn r0(&self) -> &DMatrix<f64> {
        &self.r0
    }

    fn predict_with(gps: &[TrainedGp], d: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let mut mean = DVector::zeros(gps.len());
        let mut var = DVector::zeros(gps.len());
        for (i, gp) in gps.iter().enumerate() {
            let (m, v) = gp.predict(d)?;
            mean[i] = m;
            var[i] = v;
        }
        Ok((mean, var))
    }

    /// Posterior mean and variance of every transition component at `d`.
    pub fn predict_state(&self, d: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        ensure_dim("regression input", self.n + self.m, d.len())?;
        Self::predict_with(&self.state_gps, d)
    }

    pub fn predict_output(&self, d: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        ensure_dim("regression input", self.n + self.m, d.len())?;
        Self::predict_with(&self.output_gps, d)
    }

    fn variances(gps: &[TrainedGp], d: &[f64]) -> Result<DVector<f64>> {
        let mut var = DVector::zeros(gps.len());
        for (i, gp) in gps.iter().enumerate() {
            var[i] = gp.var_unchecked(d)?;
        }
        Ok(var)
    }

    /// `Q_d = diag(σ²_{+,x}(d)) + Q0`.
    pub fn weight_q(&self, d: &[f64]) -> Result<DMatrix<f64>> {
        ensure_dim("regression input", self.n + self.m, d.len())?;
        Ok(DMatrix::from_diagonal(&Self::variances(&self.state_gps, d)?) + &self.q0)
    }

    /// `R_d = diag(σ²_{+,y}(d)) + R0`.
    pub fn weight_r(&self, d: &[f64]) -> Result<DMatrix<f64>> {
        ensure_dim("regression input", self.n + self.m, d.len())?;
        Ok(DMatrix::from_diagonal(&Self::variances(&self.output_gps, d)?) + &self.r0)
    }

    /// `Q_min⁻¹ = [diag(σ_f² + σ_ε²) + Q0]⁻¹`, `Q_max⁻¹ = Q0⁻¹`, and the `R`
    /// analogues.
    pub fn extremal_weights(&self) -> ExtremalWeights {
        let max_var = |gps: &[TrainedGp]| {
            DVector::from_iterator(
                gps.len(),
                gps.iter().map(|g| g.hyperparameters().max_variance()),
            )
        };
        let inv = |m: DMatrix<f64>| {
            m.cholesky()
                .expect("positive definite by construction")
                .inverse()
        };
        ExtremalWeights {
            q_min_inv: inv(DMatrix::from_diagonal(&max_var(&self.state_gps)) + &self.q0),
            q_max_inv: inv(self.q0.clone()),
            r_min_inv: inv(DMatrix::from_diagonal(&max_var(&self.output_gps)) + &self.r0),
            r_max_inv: inv(self.r0.clone()),
        }
    }
}

/// On-disk model bundle.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    format: String,
    version: u32,
    state_dim: usize,
    input_dim: usize,
    output_dim: usize,
    q0: Vec<Vec<f64>>,
    r0: Vec<Vec<f64>>,
    state_gps: Vec<TrainedGp>,
    output_gps: Vec<TrainedGp>,
}

const BUNDLE_FORMAT: &str = "gpmhe-model";
const BUNDLE_VERSION: u32 = 1;

impl GpStateSpaceModel {
    pub fn to_json(&self) -> String {
        let bundle = ModelBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            state_dim: self.n,
            input_dim: self.m,
            output_dim: self.p,
            q0: to_rows(&self.q0),
            r0: to_rows(&self.r0),
            state_gps: self.state_gps.clone(),
            output_gps: self.output_gps.clone(),
        };
        serde_json::to_string_pretty(&bundle).expect("model bundle always serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let b: ModelBundle =
            serde_json::from_str(s).map_err(|e| Error::config(format!("model bundle: {e}")))?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(Error::config(format!(
                "unsupported model bundle {} v{}",
                b.format, b.version
            )));
        }
        let model = Self::from_parts(
            b.state_gps,
            b.output_gps,
            b.input_dim,
            from_rows(&b.q0)?,
            from_rows(&b.r0)?,
        )?;
        if model.n != b.state_dim || model.p != b.output_dim {
            return Err(Error::config(
                "model bundle dimension metadata does not match its GPs",
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_to_string(path)?).map_err(|e| match e {
            Error::Config(msg) => Error::Format {
                path: path.into(),
                message: msg,
            },
            other => other,
        })
    }
}
