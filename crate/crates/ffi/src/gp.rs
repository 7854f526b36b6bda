use gpmhe::gp::{
    fit, optimize_hyperparameters, Dataset, Hyperparameters, OptimizerOptions, TrainedGp,
};

use crate::status::{guard, handle, out, slice, slice_mut, Failure, GpmheStatus};

/// A conditioned Gaussian process.
pub struct GpmheGp {
    inner: TrainedGp,
}

unsafe fn dataset(
    inputs: *const f64,
    outputs: *const f64,
    n: usize,
    dim: usize,
) -> Result<Dataset, Failure> {
    if n == 0 || dim == 0 {
        return Err(Failure::invalid("dataset needs n >= 1 and dim >= 1"));
    }
    let x = slice(inputs, n * dim, "inputs")?;
    let y = slice(outputs, n, "outputs")?;
    Ok(Dataset::new(
        x.chunks(dim).map(<[f64]>::to_vec).collect(),
        y.to_vec(),
    )?)
}

unsafe fn emit(gp: TrainedGp, out_gp: *mut *mut GpmheGp) -> Result<(), Failure> {
    *out(out_gp, "out_gp")? = Box::into_raw(Box::new(GpmheGp { inner: gp }));
    Ok(())
}

/// Conditions a GP on `n` row-major inputs of length `dim` with fixed
/// hyperparameters.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `lengthscales` holds
/// `dim` values.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_fit(
    inputs: *const f64,
    outputs: *const f64,
    n: usize,
    dim: usize,
    sigma_f: f64,
    lengthscales: *const f64,
    sigma_eps: f64,
    out_gp: *mut *mut GpmheGp,
) -> GpmheStatus {
    guard(|| {
        let ds = dataset(inputs, outputs, n, dim)?;
        let ell = slice(lengthscales, dim, "lengthscales")?.to_vec();
        let h = Hyperparameters::new(sigma_f, ell, sigma_eps)?;
        emit(fit(&ds, &h)?, out_gp)
    })
}

/// Like `gpmhe_gp_fit` but picks hyperparameters by maximizing the log
/// marginal likelihood from `restarts` seeded starts.
///
/// # Safety
/// As for `gpmhe_gp_fit`.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_train(
    inputs: *const f64,
    outputs: *const f64,
    n: usize,
    dim: usize,
    restarts: usize,
    seed: u64,
    out_gp: *mut *mut GpmheGp,
) -> GpmheStatus {
    guard(|| {
        let ds = dataset(inputs, outputs, n, dim)?;
        let opts = OptimizerOptions {
            restarts,
            seed,
            ..OptimizerOptions::default()
        };
        let h = optimize_hyperparameters(&ds, &opts)?;
        emit(fit(&ds, &h)?, out_gp)
    })
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `gp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_dim(gp: *const GpmheGp) -> usize {
    gp.as_ref().map_or(0, |g| g.inner.dim())
}

/// Writes `σ_f`, the `dim` lengthscales and `σ_ε`.
///
/// # Safety
/// `gp` must be a live handle and `lengthscales` hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_hyperparameters(
    gp: *const GpmheGp,
    sigma_f: *mut f64,
    lengthscales: *mut f64,
    dim: usize,
    sigma_eps: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let h = handle(gp, "gp")?.inner.hyperparameters();
        if dim != h.dim() {
            return Err(Failure::invalid(format!(
                "expected dim {}, got {dim}",
                h.dim()
            )));
        }
        slice_mut(lengthscales, dim, "lengthscales")?.copy_from_slice(&h.lengthscales);
        *out(sigma_f, "sigma_f")? = h.sigma_f;
        *out(sigma_eps, "sigma_eps")? = h.sigma_eps;
        Ok(())
    })
}

/// Posterior mean and variance at `x`.
///
/// # Safety
/// `gp` must be a live handle and `x` hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_predict(
    gp: *const GpmheGp,
    x: *const f64,
    dim: usize,
    mean: *mut f64,
    var: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = handle(gp, "gp")?;
        let (m, v) = g.inner.predict(slice(x, dim, "x")?)?;
        *out(mean, "mean")? = m;
        *out(var, "var")? = v;
        Ok(())
    })
}

/// Gradient of the posterior mean at `x`, written to `grad` (`dim` values).
///
/// # Safety
/// `gp` must be a live handle; `x` and `grad` hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_mean_grad(
    gp: *const GpmheGp,
    x: *const f64,
    dim: usize,
    grad: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = handle(gp, "gp")?;
        let d = g.inner.posterior_mean_grad(slice(x, dim, "x")?)?;
        slice_mut(grad, dim, "grad")?.copy_from_slice(d.as_slice());
        Ok(())
    })
}

/// Releases a GP. Null is ignored.
///
/// # Safety
/// `gp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_gp_free(gp: *mut GpmheGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}
