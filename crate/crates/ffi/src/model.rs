use std::ffi::{c_char, CStr};
use std::path::Path;
use std::sync::Arc;

use gpmhe::model::GpStateSpaceModel;
use nalgebra::{DMatrix, DVector};

use crate::status::{guard, handle, out, slice, slice_mut, Failure, GpmheStatus};

/// A learned state-space model, shared by the estimators built from it.
pub struct GpmheModel {
    pub(crate) inner: Arc<GpStateSpaceModel>,
}

/// Loads a model bundle written by `gpmhe train`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_load(
    path: *const c_char,
    out_model: *mut *mut GpmheModel,
) -> GpmheStatus {
    guard(|| {
        if path.is_null() {
            return Err(Failure::null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::invalid("path is not valid UTF-8"))?;
        let model = GpStateSpaceModel::load(Path::new(path))?;
        *out(out_model, "out_model")? = Box::into_raw(Box::new(GpmheModel {
            inner: Arc::new(model),
        }));
        Ok(())
    })
}

/// State, input and output dimensions.
///
/// # Safety
/// `model` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_dims(
    model: *const GpmheModel,
    n: *mut usize,
    m: *mut usize,
    p: *mut usize,
) -> GpmheStatus {
    guard(|| {
        let g = &handle(model, "model")?.inner;
        *out(n, "n")? = g.state_dim();
        *out(m, "m")? = g.input_dim();
        *out(p, "p")? = g.output_dim();
        Ok(())
    })
}

unsafe fn write_pair(
    (mean, var): (DVector<f64>, DVector<f64>),
    mean_out: *mut f64,
    var_out: *mut f64,
) -> Result<(), Failure> {
    slice_mut(mean_out, mean.len(), "mean")?.copy_from_slice(mean.as_slice());
    slice_mut(var_out, var.len(), "var")?.copy_from_slice(var.as_slice());
    Ok(())
}

unsafe fn write_matrix(w: DMatrix<f64>, buf: *mut f64) -> Result<(), Failure> {
    let dst = slice_mut(buf, w.len(), "weight")?;
    for (k, v) in w.transpose().iter().enumerate() {
        dst[k] = *v;
    }
    Ok(())
}

/// Mean and variance of `x(t+1)` at `d = (x, u)` of length `n + m`;
/// `mean` and `var` receive `n` values.
///
/// # Safety
/// Arrays must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_predict_state(
    model: *const GpmheModel,
    d: *const f64,
    len: usize,
    mean: *mut f64,
    var: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = &handle(model, "model")?.inner;
        write_pair(g.predict_state(slice(d, len, "d")?)?, mean, var)
    })
}

/// Mean and variance of `y(t)` at `d = (x, u)`; `p` values each.
///
/// # Safety
/// Arrays must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_predict_output(
    model: *const GpmheModel,
    d: *const f64,
    len: usize,
    mean: *mut f64,
    var: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = &handle(model, "model")?.inner;
        write_pair(g.predict_output(slice(d, len, "d")?)?, mean, var)
    })
}

/// Process-noise weight at `d`, row-major `n × n`.
///
/// # Safety
/// `d` holds `len` doubles, `weight` has room for `n * n`.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_weight_q(
    model: *const GpmheModel,
    d: *const f64,
    len: usize,
    weight: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = &handle(model, "model")?.inner;
        write_matrix(g.weight_q(slice(d, len, "d")?)?, weight)
    })
}

/// Measurement-noise weight at `d`, row-major `p × p`.
///
/// # Safety
/// `d` holds `len` doubles, `weight` has room for `p * p`.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_weight_r(
    model: *const GpmheModel,
    d: *const f64,
    len: usize,
    weight: *mut f64,
) -> GpmheStatus {
    guard(|| {
        let g = &handle(model, "model")?.inner;
        write_matrix(g.weight_r(slice(d, len, "d")?)?, weight)
    })
}

/// Releases a model. Estimators built from it stay valid.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_model_free(model: *mut GpmheModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
