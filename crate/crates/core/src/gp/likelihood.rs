use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{factorize, signal_gram};
use super::{Dataset, Hyperparameters};
use crate::error::{ensure_dim, Error, Result};
use crate::rng::stream_rng;

/// Log marginal likelihood and its gradient w.r.t.
/// `(log σ_f, log φ_1, .., log φ_nd, log σ_ε)`.
pub fn log_marginal_likelihood(
    ds: &Dataset,
    hyper: &Hyperparameters,
) -> Result<(f64, DVector<f64>)> {
    hyper.validate()?;
    ensure_dim("dataset vs. lengthscales", hyper.dim(), ds.dim())?;
    let kf = signal_gram(ds, hyper);
    let noise = hyper.sigma_eps * hyper.sigma_eps;
    let mut k = kf.clone();
    for i in 0..ds.len() {
        k[(i, i)] += noise;
    }
    let (chol, _) = factorize(&k, hyper.sigma_f * hyper.sigma_f)?;
    let y = DVector::from_column_slice(ds.outputs());
    let alpha = chol.solve(&y);
    let value = lml_from_parts(&y, &alpha, &chol.l_dirty().diagonal());

    // dL/dθ = ½ tr((ααᵀ − K⁻¹) ∂K/∂θ)
    let kinv = chol.inverse();
    let n = ds.len();
    let nd = ds.dim();
    let x = ds.inputs();
    let inv_ls2 = hyper.inverse_squared_lengthscales();
    let mut grad = DVector::zeros(nd + 2);
    let mut trace_w = 0.0;
    for i in 0..n {
        let wii = alpha[i] * alpha[i] - kinv[(i, i)];
        trace_w += wii;
        // diagonal of K_f contributes to σ_f only (Δ = 0 there)
        grad[0] += wii * kf[(i, i)];
        for j in 0..i {
            let wij = alpha[i] * alpha[j] - kinv[(i, j)];
            // off-diagonals appear twice in the trace
            let c = 2.0 * wij * kf[(i, j)];
            grad[0] += c;
            for (k, w) in inv_ls2.iter().enumerate() {
                let diff = x[i][k] - x[j][k];
                grad[1 + k] += 0.5 * c * diff * diff * w;
            }
        }
    }
    grad[nd + 1] = noise * trace_w;
    Ok((value, grad))
}

fn lml_value(ds: &Dataset, hyper: &Hyperparameters) -> Result<f64> {
    let kf = signal_gram(ds, hyper);
    let mut k = kf;
    let noise = hyper.sigma_eps * hyper.sigma_eps;
    for i in 0..ds.len() {
        k[(i, i)] += noise;
    }
    let (chol, _) = factorize(&k, hyper.sigma_f * hyper.sigma_f)?;
    let y = DVector::from_column_slice(ds.outputs());
    let alpha = chol.solve(&y);
    Ok(lml_from_parts(&y, &alpha, &chol.l_dirty().diagonal()))
}

fn lml_from_parts(y: &DVector<f64>, alpha: &DVector<f64>, pivots: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let logdet_half: f64 = pivots.iter().map(|p| p.ln()).sum();
    -0.5 * y.dot(alpha) - logdet_half - 0.5 * n * (2.0 * PI).ln()
}

/// Settings of the multi-start gradient ascent on the log marginal likelihood.
///
/// Bounds are `(min, max)` pairs in natural units; the ascent runs in log
/// space and projects onto them. Random starts are drawn log-uniformly from
/// the `start_*` boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    pub sigma_f_bounds: (f64, f64),
    pub lengthscale_bounds: (f64, f64),
    pub sigma_eps_bounds: (f64, f64),
    pub start_sigma_f: (f64, f64),
    pub start_lengthscale: (f64, f64),
    pub start_sigma_eps: (f64, f64),
    /// Deterministic starts tried before the random ones.
    pub initial: Vec<Hyperparameters>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            restarts: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            seed: 0,
            sigma_f_bounds: (1e-3, 1e3),
            lengthscale_bounds: (1e-2, 1e3),
            sigma_eps_bounds: (1e-6, 1e2),
            start_sigma_f: (0.1, 10.0),
            start_lengthscale: (0.1, 10.0),
            start_sigma_eps: (1e-3, 1.0),
            initial: Vec::new(),
        }
    }
}

impl OptimizerOptions {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("sigma_f_bounds", self.sigma_f_bounds),
            ("lengthscale_bounds", self.lengthscale_bounds),
            ("sigma_eps_bounds", self.sigma_eps_bounds),
            ("start_sigma_f", self.start_sigma_f),
            ("start_lengthscale", self.start_lengthscale),
            ("start_sigma_eps", self.start_sigma_eps),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::config(format!(
                    "optimizer {name} must satisfy 0 < min <= max"
                )));
            }
        }
        if self.restarts == 0 && self.initial.is_empty() {
            return Err(Error::config("optimizer needs at least one start"));
        }
        Ok(())
    }

    fn log_bounds(&self, nd: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![self.sigma_f_bounds.0.ln()];
        let mut hi = vec![self.sigma_f_bounds.1.ln()];
        lo.extend(std::iter::repeat_n(self.lengthscale_bounds.0.ln(), nd));
        hi.extend(std::iter::repeat_n(self.lengthscale_bounds.1.ln(), nd));
        lo.push(self.sigma_eps_bounds.0.ln());
        hi.push(self.sigma_eps_bounds.1.ln());
        (lo, hi)
    }
}

struct Ascent {
    params: Vec<f64>,
    value: f64,
}

/// Multi-start projected gradient ascent with backtracking in log-parameter
/// space. Starts run in parallel; the winner is the highest final value, ties
/// going to the lowest start index, so the result is seed-deterministic.
pub fn optimize_hyperparameters(ds: &Dataset, opts: &OptimizerOptions) -> Result<Hyperparameters> {
    opts.validate()?;
    let nd = ds.dim();
    for h in &opts.initial {
        ensure_dim("initial hyperparameters", nd, h.dim())?;
    }
    let (lo, hi) = opts.log_bounds(nd);
    let clamp = |p: &mut [f64]| {
        for ((v, l), h) in p.iter_mut().zip(&lo).zip(&hi) {
            *v = v.clamp(*l, *h);
        }
    };

    let mut starts: Vec<Vec<f64>> = opts
        .initial
        .iter()
        .map(|h| {
            // σ = 0 maps to -inf and is projected onto the lower bound
            let mut p = h.to_log_params();
            clamp(&mut p);
            p
        })
        .collect();
    for r in 0..opts.restarts {
        let mut rng = stream_rng(opts.seed, r as u64);
        let mut draw = |(a, b): (f64, f64)| {
            let (la, lb) = (a.ln(), b.ln());
            if lb > la {
                rng.gen_range(la..lb)
            } else {
                la
            }
        };
        let mut p = vec![draw(opts.start_sigma_f)];
        for _ in 0..nd {
            p.push(draw(opts.start_lengthscale));
        }
        p.push(draw(opts.start_sigma_eps));
        clamp(&mut p);
        starts.push(p);
    }

    let results: Vec<Option<Ascent>> = starts
        .into_par_iter()
        .map(|p| ascend(ds, p, opts, &clamp))
        .collect();

    let mut best: Option<Ascent> = None;
    for a in results.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| a.value > b.value) {
            best = Some(a);
        }
    }
    let best = best.ok_or_else(|| {
        Error::Optimization("no start produced a factorizable Gram matrix".to_string())
    })?;
    log::debug!("best log marginal likelihood {:.6}", best.value);
    Hyperparameters::from_log_params(&best.params)
}

fn ascend(
    ds: &Dataset,
    mut params: Vec<f64>,
    opts: &OptimizerOptions,
    clamp: &(dyn Fn(&mut [f64]) + Sync),
) -> Option<Ascent> {
    let eval = |p: &[f64]| -> Result<(f64, DVector<f64>)> {
        log_marginal_likelihood(ds, &Hyperparameters::from_log_params(p)?)
    };
    let (mut value, mut grad) = eval(&params).ok()?;
    let mut step = 0.1;
    for _ in 0..opts.max_iter {
        // projected gradient: zero the components pushing against a bound
        let mut trial = params.clone();
        for (t, g) in trial.iter_mut().zip(grad.iter()) {
            *t += g;
        }
        clamp(&mut trial);
        let pg = trial
            .iter()
            .zip(&params)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if pg < opts.grad_tol {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            let mut cand = params.clone();
            for (c, g) in cand.iter_mut().zip(grad.iter()) {
                *c += step * g;
            }
            clamp(&mut cand);
            let ascent: f64 = cand
                .iter()
                .zip(&params)
                .zip(grad.iter())
                .map(|((c, p), g)| (c - p) * g)
                .sum();
            let ok = Hyperparameters::from_log_params(&cand)
                .and_then(|h| lml_value(ds, &h))
                .ok()
                .filter(|v| *v >= value + 1e-4 * ascent && *v > value);
            if ok.is_some() {
                match eval(&cand) {
                    Ok((v, g)) => {
                        params = cand;
                        value = v;
                        grad = g;
                        accepted = true;
                        step *= 2.0;
                        break;
                    }
                    Err(_) => step *= 0.5,
                }
            } else {
                step *= 0.5;
            }
        }
        if !accepted {
            break;
        }
    }
    Some(Ascent { params, value })
}
