use nalgebra::{DMatrix, DVector};

use crate::dynamics::TrueSystem;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::is_positive_definite;
use crate::model::GpStateSpaceModel;

/// Everything the window solver needs from one stage `(x, u)`.
#[derive(Debug, Clone)]
pub struct StageEval {
    pub state_mean: DVector<f64>,
    /// `∂ state_mean / ∂x`, `n × n`.
    pub state_jacobian: DMatrix<f64>,
    pub output_mean: DVector<f64>,
    /// `∂ output_mean / ∂x`, `p × n`.
    pub output_jacobian: DMatrix<f64>,
    pub weight_q: DMatrix<f64>,
    pub weight_r: DMatrix<f64>,
}

/// The dynamics and weights an estimator runs on. Implemented by the learned
/// GP model and by [`ExactModel`], so both share one solver.
pub trait ModelInterface: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn stage(&self, x: &[f64], u: &[f64]) -> Result<StageEval>;

    /// `(Q_d, R_d)` only.
    fn weights(&self, x: &[f64], u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)>;

    /// Mean of the next state only.
    fn state_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>>;

    fn output_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>>;

    /// True when the weights do not depend on the stage.
    fn constant_weights(&self) -> bool {
        false
    }
}

fn regression_input(x: &[f64], u: &[f64]) -> Vec<f64> {
    x.iter().chain(u).copied().collect()
}

impl ModelInterface for GpStateSpaceModel {
    fn state_dim(&self) -> usize {
        GpStateSpaceModel::state_dim(self)
    }
    fn input_dim(&self) -> usize {
        GpStateSpaceModel::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        GpStateSpaceModel::output_dim(self)
    }

    fn stage(&self, x: &[f64], u: &[f64]) -> Result<StageEval> {
        let n = self.state_dim();
        let d = regression_input(x, u);
        ensure_dim("regression input", n + self.input_dim(), d.len())?;
        let eval =
            |gps: &[crate::gp::TrainedGp]| -> Result<(DVector<f64>, DMatrix<f64>, DVector<f64>)> {
                let mut mean = DVector::zeros(gps.len());
                let mut jac = DMatrix::zeros(gps.len(), n);
                let mut var = DVector::zeros(gps.len());
                for (i, gp) in gps.iter().enumerate() {
                    let (m, g, v) = gp.mean_grad_var_unchecked(&d)?;
                    mean[i] = m;
                    for k in 0..n {
                        jac[(i, k)] = g[k];
                    }
                    var[i] = v;
                }
                Ok((mean, jac, var))
            };
        let (state_mean, state_jacobian, sv) = eval(self.state_gps())?;
        let (output_mean, output_jacobian, ov) = eval(self.output_gps())?;
        Ok(StageEval {
            state_mean,
            state_jacobian,
            output_mean,
            output_jacobian,
            weight_q: DMatrix::from_diagonal(&sv) + self.q0(),
            weight_r: DMatrix::from_diagonal(&ov) + self.r0(),
        })
    }

    fn weights(&self, x: &[f64], u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = regression_input(x, u);
        Ok((self.weight_q(&d)?, self.weight_r(&d)?))
    }

    fn state_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        Ok(self.predict_state(&regression_input(x, u))?.0)
    }

    fn output_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        Ok(self.predict_output(&regression_input(x, u))?.0)
    }
}

/// A known system with constant weights `Q0`, `R0`: the model-based MHE
/// baseline.
pub struct ExactModel<S> {
    system: S,
    q0: DMatrix<f64>,
    r0: DMatrix<f64>,
}

impl<S: TrueSystem> ExactModel<S> {
    pub fn new(system: S, q0: DMatrix<f64>, r0: DMatrix<f64>) -> Result<Self> {
        let (n, p) = (system.state_dim(), system.output_dim());
        if q0.shape() != (n, n) || !is_positive_definite(&q0) {
            return Err(Error::config(format!(
                "Q0 must be a {n}x{n} positive definite matrix"
            )));
        }
        if r0.shape() != (p, p) || !is_positive_definite(&r0) {
            return Err(Error::config(format!(
                "R0 must be a {p}x{p} positive definite matrix"
            )));
        }
        Ok(ExactModel { system, q0, r0 })
    }

    pub fn system(&self) -> &S {
        &self.system
    }
}

impl<S: TrueSystem> ModelInterface for ExactModel<S> {
    fn state_dim(&self) -> usize {
        self.system.state_dim()
    }
    fn input_dim(&self) -> usize {
        self.system.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.system.output_dim()
    }

    fn stage(&self, x: &[f64], u: &[f64]) -> Result<StageEval> {
        ensure_dim("state", self.state_dim(), x.len())?;
        Ok(StageEval {
            state_mean: self.system.transition(x, u),
            state_jacobian: self.system.transition_jacobian(x, u),
            output_mean: self.system.output(x, u),
            output_jacobian: self.system.output_jacobian(x, u),
            weight_q: self.q0.clone(),
            weight_r: self.r0.clone(),
        })
    }

    fn weights(&self, _x: &[f64], _u: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok((self.q0.clone(), self.r0.clone()))
    }

    fn state_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        Ok(self.system.transition(x, u))
    }

    fn output_mean(&self, x: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        Ok(self.system.output(x, u))
    }

    fn constant_weights(&self) -> bool {
        true
    }
}
