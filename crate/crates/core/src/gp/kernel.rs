use nalgebra::{Cholesky, DMatrix, Dyn};

use super::{Dataset, Hyperparameters};
use crate::error::{ensure_dim, Error, Result};

/// First jitter tried after a failed factorization, relative to `σ_f²`.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Squared-exponential ARD kernel without the noise term.
pub fn kernel_eval(d1: &[f64], d2: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    ensure_dim("kernel input d1", hyper.dim(), d1.len())?;
    ensure_dim("kernel input d2", hyper.dim(), d2.len())?;
    if d1.iter().chain(d2).any(|v| !v.is_finite()) {
        return Err(Error::contract("kernel inputs must be finite"));
    }
    Ok(se_ard(
        d1,
        d2,
        hyper.sigma_f * hyper.sigma_f,
        &hyper.inverse_squared_lengthscales(),
    ))
}

#[inline]
pub(crate) fn se_ard(d1: &[f64], d2: &[f64], sigma_f2: f64, inv_ls2: &[f64]) -> f64 {
    let mut r2 = 0.0;
    for ((a, b), w) in d1.iter().zip(d2).zip(inv_ls2) {
        let diff = a - b;
        r2 += diff * diff * w;
    }
    sigma_f2 * (-0.5 * r2).exp()
}

/// `K(D, D) + σ_ε² I`, without jitter.
pub fn gram_matrix(ds: &Dataset, hyper: &Hyperparameters) -> Result<DMatrix<f64>> {
    ensure_dim("dataset vs. lengthscales", hyper.dim(), ds.dim())?;
    let mut k = signal_gram(ds, hyper);
    let noise = hyper.sigma_eps * hyper.sigma_eps;
    for i in 0..ds.len() {
        k[(i, i)] += noise;
    }
    Ok(k)
}

pub(crate) fn signal_gram(ds: &Dataset, hyper: &Hyperparameters) -> DMatrix<f64> {
    let n = ds.len();
    let sf2 = hyper.sigma_f * hyper.sigma_f;
    let inv = hyper.inverse_squared_lengthscales();
    let x = ds.inputs();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2;
        for j in 0..i {
            let v = se_ard(&x[i], &x[j], sf2, &inv);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factorization with the bounded jitter escalation: no jitter first,
/// then `1e-10·s`, `1e-9·s`, ... up to `1e-4·s` added to the diagonal, where
/// `s = σ_f²` (or 1 when `σ_f = 0`). Returns the factor and the jitter used.
pub(crate) fn factorize(k: &DMatrix<f64>, sigma_f2: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let scale = if sigma_f2 > 0.0 { sigma_f2 } else { 1.0 };
    let max_diag = k
        .diagonal()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_diag = k.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
    if let Some(c) = try_cholesky(k.clone(), max_diag) {
        return Ok((c, 0.0));
    }
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * scale;
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = try_cholesky(kj, max_diag + jitter) {
            log::debug!("cholesky succeeded with jitter {jitter:e}");
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX * (1.0 - 1e-12) {
            return Err(Error::NotPositiveDefinite {
                size: k.nrows(),
                jitter,
                min_diag,
                max_diag,
            });
        }
        rel *= 10.0;
    }
}

/// Rejects factors whose smallest squared pivot is at round-off level.
fn try_cholesky(k: DMatrix<f64>, max_diag: f64) -> Option<Cholesky<f64, Dyn>> {
    if k.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let c = Cholesky::new(k)?;
    let floor = f64::EPSILON * max_diag.max(f64::MIN_POSITIVE);
    let ok = c.l_dirty().diagonal().iter().all(|p| p * p > floor);
    ok.then_some(c)
}
