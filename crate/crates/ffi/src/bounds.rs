use gpmhe::bounds::{self, DetectabilityConfig};
use gpmhe::BoxSet;
use nalgebra::DMatrix;

use crate::status::{guard, out, slice, GpmheStatus};

/// Decay rate `mu` and minimal horizon for detectability constants `p1`,
/// `p2` (row-major `n × n`) and discount `eta`.
///
/// # Safety
/// `p1` and `p2` hold `n * n` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_minimal_horizon(
    p1: *const f64,
    p2: *const f64,
    n: usize,
    eta: f64,
    mu: *mut f64,
    m_bar: *mut usize,
) -> GpmheStatus {
    guard(|| {
        let cfg = DetectabilityConfig {
            p1: DMatrix::from_row_slice(n, n, slice(p1, n * n, "p1")?),
            p2: DMatrix::from_row_slice(n, n, slice(p2, n * n, "p2")?),
            eta,
        };
        let (m, h) = bounds::minimal_horizon(&cfg)?;
        *out(mu, "mu")? = m;
        *out(m_bar, "m_bar")? = h;
        Ok(())
    })
}

/// Number of grid points covering `[lower, upper]` at radius `tau`.
///
/// # Safety
/// `lower` and `upper` hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_covering_number(
    lower: *const f64,
    upper: *const f64,
    n: usize,
    tau: f64,
    covering: *mut u64,
) -> GpmheStatus {
    guard(|| {
        let b = BoxSet::new(
            slice(lower, n, "lower")?.to_vec(),
            slice(upper, n, "upper")?.to_vec(),
        )?;
        *out(covering, "covering")? = bounds::covering_number(&b, tau)?;
        Ok(())
    })
}

/// `2 ln(covering / delta)`.
///
/// # Safety
/// `beta` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_beta(covering: u64, delta: f64, beta: *mut f64) -> GpmheStatus {
    guard(|| {
        *out(beta, "beta")? = bounds::beta(covering, delta)?;
        Ok(())
    })
}

/// Confidence level `(1 − delta)^(n + p)` of the probabilistic bound.
///
/// # Safety
/// `probability` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gpmhe_probability(
    n: usize,
    p: usize,
    delta: f64,
    probability: *mut f64,
) -> GpmheStatus {
    guard(|| {
        *out(probability, "probability")? = bounds::probability(n, p, delta)?;
        Ok(())
    })
}
