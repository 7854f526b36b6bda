use std::collections::VecDeque;

use nalgebra::DVector;

use super::{solve_window, Measurement, MheConfig, MheSolution, ModelInterface};
use crate::error::{ensure_dim, Error, Result};

/// Running state of one estimator: the last `M` measurements, the last
/// `M + 1` estimates and the previous window solution.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    t: usize,
    horizon: usize,
    buffer: VecDeque<Measurement>,
    /// `x̂(t−len+1) .. x̂(t)`.
    estimates: VecDeque<DVector<f64>>,
    last_solution: Option<Vec<DVector<f64>>>,
}

impl EstimatorState {
    /// State at `t = 0` with initial estimate `x̂(0)`.
    pub fn new(initial: DVector<f64>, config: &MheConfig) -> Result<Self> {
        config.validate()?;
        ensure_dim("initial estimate", config.state_dim(), initial.len())?;
        if !config.state_box.contains(initial.as_slice(), 1e-9) {
            return Err(Error::contract(
                "initial estimate lies outside the state box",
            ));
        }
        Ok(EstimatorState {
            t: 0,
            horizon: config.horizon,
            buffer: VecDeque::with_capacity(config.horizon),
            estimates: VecDeque::from(vec![initial]),
            last_solution: None,
        })
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn current_estimate(&self) -> &DVector<f64> {
        self.estimates
            .back()
            .expect("estimate history is never empty")
    }

    pub fn window(&self) -> impl Iterator<Item = &Measurement> {
        self.buffer.iter()
    }

    pub fn last_solution(&self) -> Option<&[DVector<f64>]> {
        self.last_solution.as_deref()
    }

    /// Stored estimate `x̂(s)` if still in the history.
    pub fn estimate_at(&self, s: usize) -> Option<&DVector<f64>> {
        let front = (self.t + 1).checked_sub(self.estimates.len())?;
        self.estimates.get(s.checked_sub(front)?)
    }
}

/// Advances the estimator from `t` to `t + 1` with the pair `(u(t), y(t))`
/// and returns `x̂(t+1)` with the window solution. The prior is the stored
/// estimate `x̂(t+1−M_{t+1})`. On error the state is left unchanged.
pub fn estimator_step<M: ModelInterface + ?Sized>(
    state: &mut EstimatorState,
    config: &MheConfig,
    model: &M,
    u_prev: &[f64],
    y_prev: &[f64],
) -> Result<(DVector<f64>, MheSolution)> {
    if config.horizon != state.horizon {
        return Err(Error::contract(
            "estimator state was created with a different horizon",
        ));
    }
    ensure_dim("input", model.input_dim(), u_prev.len())?;
    ensure_dim("output", model.output_dim(), y_prev.len())?;
    let t = state.t + 1;
    let mt = t.min(config.horizon);

    let mut window: Vec<Measurement> = state.buffer.iter().cloned().collect();
    window.push(Measurement::new(u_prev.to_vec(), y_prev.to_vec()));
    let window = window.split_off(window.len() - mt);

    let prior = state
        .estimate_at(t - mt)
        .cloned()
        .ok_or_else(|| Error::numerical("prior estimate missing from history"))?;

    let warm: Option<Vec<DVector<f64>>> = state.last_solution.as_ref().map(|prev| {
        let mut seq = prev.clone();
        seq.push(prev.last().expect("solutions are non-empty").clone());
        let skip = seq.len().saturating_sub(mt + 1);
        seq.split_off(skip)
    });
    let warm = warm.filter(|w| w.len() == mt + 1);

    let sol = solve_window(config, model, &prior, &window, warm.as_deref())?;
    let estimate = sol.estimate().clone();

    state.t = t;
    state.buffer = window.into();
    while state.buffer.len() > config.horizon {
        state.buffer.pop_front();
    }
    state.estimates.push_back(estimate.clone());
    while state.estimates.len() > config.horizon + 1 {
        state.estimates.pop_front();
    }
    state.last_solution = Some(sol.x_seq.clone());
    Ok((estimate, sol))
}
