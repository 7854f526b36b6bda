use std::sync::Arc;

use gpmhe::mhe::{estimator_step, EstimatorState, MheConfig, SolverOptions};
use gpmhe::model::GpStateSpaceModel;
use gpmhe::BoxSet;
use nalgebra::{DMatrix, DVector};

use crate::model::GpmheModel;
use crate::status::{guard, handle, out, slice, slice_mut, Failure, GpmheStatus};

/// A running moving horizon estimator over a learned model.
pub struct GpmheEstimator {
    model: Arc<GpStateSpaceModel>,
    config: MheConfig,
    state: EstimatorState,
}

/// Creates an estimator with horizon `horizon`, discount `eta`, prior
/// weight `p2` (row-major `n × n`), state box `[lower, upper]` and initial
/// estimate `x0`, all of state dimension `n`.
///
/// # Safety
/// `model` must be a live handle; arrays must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_estimator_new(
    model: *const GpmheModel,
    horizon: usize,
    eta: f64,
    p2: *const f64,
    lower: *const f64,
    upper: *const f64,
    x0: *const f64,
    n: usize,
    out_estimator: *mut *mut GpmheEstimator,
) -> GpmheStatus {
    guard(|| {
        let model = Arc::clone(&handle(model, "model")?.inner);
        if n != model.state_dim() {
            return Err(Failure::invalid(format!(
                "model has state dimension {}, got {n}",
                model.state_dim()
            )));
        }
        let config = MheConfig {
            horizon,
            eta,
            p2: DMatrix::from_row_slice(n, n, slice(p2, n * n, "p2")?),
            state_box: BoxSet::new(
                slice(lower, n, "lower")?.to_vec(),
                slice(upper, n, "upper")?.to_vec(),
            )?,
            solver: SolverOptions::default(),
        };
        let state = EstimatorState::new(DVector::from_column_slice(slice(x0, n, "x0")?), &config)?;
        *out(out_estimator, "out_estimator")? = Box::into_raw(Box::new(GpmheEstimator {
            model,
            config,
            state,
        }));
        Ok(())
    })
}

/// Feeds `(u(t), y(t))` and writes `x̂(t+1)` to `estimate` (`n` values).
/// `converged` may be null. On error the estimator is unchanged.
///
/// # Safety
/// `estimator` must be a live handle; arrays must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_estimator_step(
    estimator: *mut GpmheEstimator,
    u: *const f64,
    m: usize,
    y: *const f64,
    p: usize,
    estimate: *mut f64,
    n: usize,
    converged: *mut bool,
) -> GpmheStatus {
    guard(|| {
        let est = estimator
            .as_mut()
            .ok_or_else(|| Failure::null("estimator"))?;
        let dst = slice_mut(estimate, n, "estimate")?;
        if n != est.model.state_dim() {
            return Err(Failure::invalid(format!(
                "estimate buffer must hold {} values",
                est.model.state_dim()
            )));
        }
        let (x, sol) = estimator_step(
            &mut est.state,
            &est.config,
            est.model.as_ref(),
            slice(u, m, "u")?,
            slice(y, p, "y")?,
        )?;
        dst.copy_from_slice(x.as_slice());
        if let Some(c) = converged.as_mut() {
            *c = sol.converged;
        }
        Ok(())
    })
}

/// Current time index `t`, or 0 for a null handle.
///
/// # Safety
/// `estimator` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_estimator_time(estimator: *const GpmheEstimator) -> usize {
    estimator.as_ref().map_or(0, |e| e.state.time())
}

/// Releases an estimator. Null is ignored.
///
/// # Safety
/// `estimator` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_estimator_free(estimator: *mut GpmheEstimator) {
    if !estimator.is_null() {
        drop(Box::from_raw(estimator));
    }
}
