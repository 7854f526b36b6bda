//! Moving horizon estimation in prediction form.
//!
//! At time `t` the estimator optimizes the window states
//! `x̄(t−M_t|t) .. x̄(t|t)`, `M_t = min(t, M)`, against the cost
//!
//! ```text
//! 2‖x̄(t−M_t) − x̂(t−M_t)‖²_{P2} η^{M_t}
//!   + Σ_{j=1}^{M_t} 2η^{j−1} (‖w̄(t−j)‖²_{Q⁻¹(d̄)} + ‖v̄(t−j)‖²_{R⁻¹(d̄)})
//! ```
//!
//! with `w̄`, `v̄` eliminated through the model means and the states held in
//! the box `X`. The estimate is the last window state.

mod estimator;
mod models;
mod problem;
mod solver;

pub use estimator::{estimator_step, EstimatorState};
pub use models::{ExactModel, ModelInterface, StageEval};
pub use problem::{cost, residuals};
pub use solver::solve_window;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boxset::BoxSet;
use crate::error::{Error, Result};
use crate::linalg::is_positive_definite;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when the accepted step's ∞-norm falls below this.
    pub step_tol: f64,
    /// Stop when the projected true gradient is below `grad_tol·(1 + cost)`.
    pub grad_tol: f64,
    /// Initial Levenberg-Marquardt damping.
    pub lm_lambda0: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100,
            step_tol: 1e-8,
            grad_tol: 1e-6,
            lm_lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MheConfig {
    /// Horizon `M`.
    pub horizon: usize,
    /// Discount `η ∈ [0, 1)`.
    pub eta: f64,
    /// Prior weight `P2`.
    pub p2: DMatrix<f64>,
    pub state_box: BoxSet,
    pub solver: SolverOptions,
}

impl MheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("MHE horizon must be positive"));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::config(format!(
                "discount eta must lie in [0, 1), got {}",
                self.eta
            )));
        }
        self.state_box.validate()?;
        let n = self.state_box.dim();
        if self.p2.shape() != (n, n) || !is_positive_definite(&self.p2) {
            return Err(Error::config(format!(
                "P2 must be a {n}x{n} positive definite matrix"
            )));
        }
        let s = &self.solver;
        if s.max_iter == 0 || !(s.step_tol > 0.0) || !(s.grad_tol > 0.0) || !(s.lm_lambda0 > 0.0) {
            return Err(Error::config("solver options must be positive"));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_box.dim()
    }
}

/// One `(u(j), y(j))` pair of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

impl Measurement {
    pub fn new(input: Vec<f64>, output: Vec<f64>) -> Self {
        Measurement { input, output }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MheSolution {
    /// `x̂(t−M_t|t) .. x̂(t|t)`.
    pub x_seq: Vec<DVector<f64>>,
    /// `ŵ(j) = x̂(j+1) − m_x(d̂(j))`.
    pub w_seq: Vec<DVector<f64>>,
    /// `v̂(j) = y(j) − m_y(d̂(j))`.
    pub v_seq: Vec<DVector<f64>>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ∞-norm of the projected gradient of the true cost at `x_seq`.
    pub projected_gradient: f64,
}

impl MheSolution {
    pub fn estimate(&self) -> &DVector<f64> {
        self.x_seq
            .last()
            .expect("solutions hold at least one state")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{batch_reactor, simulate, NoiseSpec, TrueSystem};

    fn reactor_config(horizon: usize, eta: f64) -> MheConfig {
        MheConfig {
            horizon,
            eta,
            p2: DMatrix::identity(2, 2),
            state_box: BoxSet::cube(0.1, 4.5, 2).unwrap(),
            solver: SolverOptions::default(),
        }
    }

    fn reactor_model() -> ExactModel<crate::dynamics::BatchReactor> {
        ExactModel::new(
            batch_reactor(),
            DMatrix::from_diagonal_element(2, 2, 0.5),
            DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap()
    }

    fn window_of(ys: &[f64]) -> Vec<Measurement> {
        ys.iter()
            .map(|y| Measurement::new(vec![], vec![*y]))
            .collect()
    }

    /// Term-by-term cost with explicit inverses.
    fn oracle(
        cfg: &MheConfig,
        model: &ExactModel<crate::dynamics::BatchReactor>,
        prior: &DVector<f64>,
        window: &[Measurement],
        xs: &[DVector<f64>],
    ) -> f64 {
        let sys = model.system();
        let mt = window.len();
        let e = &xs[0] - prior;
        let mut total = 2.0 * (e.transpose() * &cfg.p2 * &e)[0] * cfg.eta.powi(mt as i32);
        let qi = DMatrix::from_diagonal_element(2, 2, 2.0);
        let ri = 0.5;
        for j in 1..=mt {
            let k = mt - j;
            let w = &xs[k + 1] - sys.transition(xs[k].as_slice(), &[]);
            let v = window[k].output[0] - sys.output(xs[k].as_slice(), &[])[0];
            total +=
                2.0 * cfg.eta.powi(j as i32 - 1) * ((w.transpose() * &qi * &w)[0] + ri * v * v);
        }
        total
    }

    #[test]
    fn cost_matches_oracle_on_two_steps() {
        let cfg = reactor_config(5, 0.7);
        let model = reactor_model();
        let prior = DVector::from_vec(vec![2.0, 1.0]);
        let window = window_of(&[3.2, 2.9]);
        let xs = vec![
            DVector::from_vec(vec![2.5, 0.8]),
            DVector::from_vec(vec![1.9, 1.3]),
            DVector::from_vec(vec![1.7, 1.1]),
        ];
        let got = cost(&cfg, &model, &prior, &window, &xs).unwrap();
        let want = oracle(&cfg, &model, &prior, &window, &xs);
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1.0),
            "{got} vs {want}"
        );
    }

    #[test]
    fn empty_window_cost_is_prior_term() {
        let cfg = reactor_config(5, 0.3);
        let prior = DVector::from_vec(vec![2.0, 1.0]);
        let xs = vec![DVector::from_vec(vec![2.5, 0.5])];
        let got = cost(&cfg, &reactor_model(), &prior, &[], &xs).unwrap();
        assert!((got - 2.0 * (0.25 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn zero_discount_keeps_newest_stage_only() {
        let cfg = reactor_config(5, 0.0);
        let model = reactor_model();
        let prior = DVector::from_vec(vec![4.0, 0.2]);
        let window = window_of(&[3.0, 2.5, 2.2]);
        let xs: Vec<_> = [[2.0, 1.0], [1.8, 1.1], [1.7, 1.0], [1.6, 1.2]]
            .iter()
            .map(|x| DVector::from_column_slice(x))
            .collect();
        let got = cost(&cfg, &model, &prior, &window, &xs).unwrap();
        let sys = model.system();
        let w = &xs[3] - sys.transition(xs[2].as_slice(), &[]);
        let v = 2.2 - sys.output(xs[2].as_slice(), &[])[0];
        let newest = 2.0 * (2.0 * w.norm_squared() + 0.5 * v * v);
        assert!((got - newest).abs() < 1e-14);
        assert!((got - oracle(&cfg, &model, &prior, &window, &xs)).abs() < 1e-14);
    }

    #[test]
    fn cost_rejects_wrong_sequence_length() {
        let cfg = reactor_config(5, 0.5);
        let prior = DVector::from_vec(vec![2.0, 1.0]);
        let err = cost(
            &cfg,
            &reactor_model(),
            &prior,
            &window_of(&[1.0]),
            std::slice::from_ref(&prior),
        );
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn empty_window_returns_prior() {
        let cfg = reactor_config(5, 0.9);
        let prior = DVector::from_vec(vec![2.0, 1.0]);
        let sol = solve_window(&cfg, &reactor_model(), &prior, &[], None).unwrap();
        assert_eq!(sol.x_seq, vec![prior]);
        assert_eq!(sol.cost, 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn infeasible_prior_is_a_contract_violation() {
        let cfg = reactor_config(5, 0.9);
        let prior = DVector::from_vec(vec![5.0, 1.0]);
        let err = solve_window(&cfg, &reactor_model(), &prior, &window_of(&[1.0]), None);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn exact_noise_free_window_is_recovered() {
        let sys = batch_reactor();
        let x0 = [3.0, 1.0];
        let traj = simulate(&sys, &x0, &[], 10, &NoiseSpec::noiseless(), 0, None).unwrap();
        let window: Vec<_> = traj
            .outputs
            .iter()
            .map(|y| Measurement::new(vec![], y.clone()))
            .collect();
        let cfg = reactor_config(10, 0.91);
        let prior = DVector::from_column_slice(&x0);
        let sol = solve_window(&cfg, &reactor_model(), &prior, &window, None).unwrap();
        assert!(sol.cost < 1e-10);
        for (x, t) in sol.x_seq.iter().zip(&traj.states) {
            assert!((x - DVector::from_column_slice(t)).amax() < 1e-6);
        }
    }

    #[test]
    fn solution_is_feasible_and_identities_hold_bitwise() {
        let cfg = reactor_config(6, 0.91);
        let model = reactor_model();
        let prior = DVector::from_vec(vec![4.4, 0.15]);
        let window = window_of(&[0.5, 0.4, 6.0, 0.3, 0.2, 0.3]);
        let sol = solve_window(&cfg, &model, &prior, &window, None).unwrap();
        for x in &sol.x_seq {
            assert!(cfg.state_box.contains(x.as_slice(), 1e-9));
        }
        let (w, v) = residuals(&model, &window, &sol.x_seq).unwrap();
        assert_eq!(w, sol.w_seq);
        assert_eq!(v, sol.v_seq);
        if sol.converged {
            assert!(sol.projected_gradient <= 1e-6 * (1.0 + sol.cost));
        }
    }

    #[test]
    fn cost_never_increases_with_more_iterations() {
        let model = reactor_model();
        let prior = DVector::from_vec(vec![4.0, 4.0]);
        let window = window_of(&[3.1, 3.0, 2.95, 2.8, 2.7]);
        let mut last = f64::INFINITY;
        for it in 1..12 {
            let mut cfg = reactor_config(5, 0.91);
            cfg.solver.max_iter = it;
            let c = solve_window(&cfg, &model, &prior, &window, None)
                .unwrap()
                .cost;
            assert!(c <= last + 1e-15, "iteration {it}: {c} > {last}");
            last = c;
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = reactor_config(5, 1.0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.eta = 0.5;
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
    }
}
