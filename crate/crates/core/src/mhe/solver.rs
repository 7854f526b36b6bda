use log::debug;
use nalgebra::{DMatrix, DVector};

use super::problem::{residuals, Evaluation, Problem};
use super::{Measurement, MheConfig, MheSolution, ModelInterface};
use crate::error::{ensure_dim, Error, Result};

const FEASIBILITY_TOL: f64 = 1e-9;
const LAMBDA_MAX: f64 = 1e12;
const LAMBDA_MIN: f64 = 1e-12;

/// Solves one MHE window by projected Levenberg-Marquardt over the window
/// states.
///
/// The starting point is the better of the projected model rollout from
/// `prior` and the projected `warm_start`. Steps are only accepted when the
/// cost decreases, so the result is never worse than either start.
/// `converged` is set when the projected gradient of the cost is below
/// `grad_tol·(1 + cost)`.
pub fn solve_window<M: ModelInterface + ?Sized>(
    config: &MheConfig,
    model: &M,
    prior: &DVector<f64>,
    window: &[Measurement],
    warm_start: Option<&[DVector<f64>]>,
) -> Result<MheSolution> {
    config.validate()?;
    let problem = Problem {
        config,
        model,
        prior,
        window,
    };
    problem.check()?;
    if !config.state_box.contains(prior.as_slice(), FEASIBILITY_TOL) {
        return Err(Error::contract("MHE prior lies outside the state box"));
    }
    let n = problem.n();
    let mt = problem.horizon();
    let project = |z: &mut [f64]| {
        for (i, zi) in z.iter_mut().enumerate() {
            let a = i % n;
            *zi = zi.clamp(config.state_box.lower[a], config.state_box.upper[a]);
        }
    };

    let mut rollout = Vec::with_capacity(n * (mt + 1));
    rollout.extend(prior.iter().copied());
    project(&mut rollout);
    for (k, meas) in window.iter().enumerate() {
        let next = model.state_mean(&rollout[k * n..(k + 1) * n], &meas.input)?;
        rollout.extend(next.iter().copied());
        project(&mut rollout[(k + 1) * n..]);
    }
    let mut z = rollout;
    let mut ev = problem.evaluate(&z)?;

    if let Some(ws) = warm_start {
        if ws.len() != mt + 1 {
            return Err(Error::contract(format!(
                "warm start has {} states, window needs {}",
                ws.len(),
                mt + 1
            )));
        }
        let mut zw = Vec::with_capacity(n * (mt + 1));
        for x in ws {
            ensure_dim("warm start state", n, x.len())?;
            zw.extend(x.iter().copied());
        }
        project(&mut zw);
        let evw = problem.evaluate(&zw)?;
        if evw.cost < ev.cost {
            z = zw;
            ev = evw;
        }
    }

    let opts = &config.solver;
    let mut lambda = opts.lm_lambda0;
    let mut iterations = 0;
    let mut pg;
    loop {
        let (r, jac) = problem.linearize(&ev, &z)?;
        let g = problem.true_gradient(&ev, &z, &r, &jac)?;
        pg = problem.projected_gradient_norm(&z, &g);
        if pg <= opts.grad_tol * (1.0 + ev.cost) || iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let free = free_variables(config, n, &z, &g);
        let step = match lm_step(&problem, &jac, &g, &free, &z, &ev, &mut lambda, &project)? {
            Some(s) => Some(s),
            None => gradient_step(&problem, &g, &z, &ev, &project)?,
        };
        let Some((z_new, ev_new)) = step else {
            debug!(
                "window solve stalled at iteration {iterations}, cost {:e}",
                ev.cost
            );
            let (r, jac) = problem.linearize(&ev, &z)?;
            pg = problem.projected_gradient_norm(&z, &problem.true_gradient(&ev, &z, &r, &jac)?);
            break;
        };
        let moved = z_new
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = z_new;
        ev = ev_new;
        if moved < opts.step_tol {
            let (r, jac) = problem.linearize(&ev, &z)?;
            pg = problem.projected_gradient_norm(&z, &problem.true_gradient(&ev, &z, &r, &jac)?);
            break;
        }
    }

    let converged = pg <= opts.grad_tol * (1.0 + ev.cost);
    let x_seq: Vec<DVector<f64>> = problem.states(&z).map(DVector::from_column_slice).collect();
    let (w_seq, v_seq) = residuals(model, window, &x_seq)?;
    Ok(MheSolution {
        x_seq,
        w_seq,
        v_seq,
        cost: ev.cost,
        iterations,
        converged,
        projected_gradient: pg,
    })
}

/// Indices not pinned at a bound by a gradient pointing outward.
fn free_variables(config: &MheConfig, n: usize, z: &[f64], g: &DVector<f64>) -> Vec<usize> {
    let b = &config.state_box;
    (0..z.len())
        .filter(|&i| {
            let a = i % n;
            let at_lower = z[i] <= b.lower[a] && g[i] > 0.0;
            let at_upper = z[i] >= b.upper[a] && g[i] < 0.0;
            !(at_lower || at_upper)
        })
        .collect()
}

/// Damped Gauss-Newton step on the free variables. Raises `lambda` until the
/// projected trial lowers the cost; `None` once damping saturates.
#[allow(clippy::too_many_arguments)]
fn lm_step<M: ModelInterface + ?Sized>(
    problem: &Problem<'_, M>,
    jac: &DMatrix<f64>,
    g: &DVector<f64>,
    free: &[usize],
    z: &[f64],
    ev: &Evaluation,
    lambda: &mut f64,
    project: &dyn Fn(&mut [f64]),
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    if free.is_empty() {
        return Ok(None);
    }
    let jf = jac.select_columns(free);
    let h = jf.transpose() * &jf * 2.0;
    let gf = DVector::from_iterator(free.len(), free.iter().map(|&i| g[i]));
    let scale = h.diagonal().max().max(1e-300);
    while *lambda <= LAMBDA_MAX {
        let mut a = h.clone();
        for i in 0..free.len() {
            a[(i, i)] += *lambda * (h[(i, i)] + 1e-12 * scale);
        }
        let Some(chol) = a.cholesky() else {
            *lambda *= 10.0;
            continue;
        };
        let delta = chol.solve(&(-&gf));
        let mut trial = z.to_vec();
        for (k, &i) in free.iter().enumerate() {
            trial[i] += delta[k];
        }
        project(&mut trial);
        if let Some(ev_new) = try_evaluate(problem, &trial)? {
            if ev_new.cost < ev.cost {
                *lambda = (*lambda / 10.0).max(LAMBDA_MIN);
                return Ok(Some((trial, ev_new)));
            }
        }
        *lambda *= 10.0;
    }
    *lambda = problem.config.solver.lm_lambda0;
    Ok(None)
}

/// Projected steepest descent with backtracking.
fn gradient_step<M: ModelInterface + ?Sized>(
    problem: &Problem<'_, M>,
    g: &DVector<f64>,
    z: &[f64],
    ev: &Evaluation,
    project: &dyn Fn(&mut [f64]),
) -> Result<Option<(Vec<f64>, Evaluation)>> {
    let gmax = g.amax();
    if gmax == 0.0 {
        return Ok(None);
    }
    let mut t = 1.0 / gmax;
    for _ in 0..60 {
        let mut trial: Vec<f64> = z.iter().zip(g.iter()).map(|(zi, gi)| zi - t * gi).collect();
        project(&mut trial);
        if let Some(ev_new) = try_evaluate(problem, &trial)? {
            if ev_new.cost < ev.cost {
                return Ok(Some((trial, ev_new)));
            }
        }
        t *= 0.5;
    }
    Ok(None)
}

/// Evaluates a trial point; numerical failures count as a rejected trial.
fn try_evaluate<M: ModelInterface + ?Sized>(
    problem: &Problem<'_, M>,
    z: &[f64],
) -> Result<Option<Evaluation>> {
    match problem.evaluate(z) {
        Ok(ev) if ev.cost.is_finite() => Ok(Some(ev)),
        Ok(_) | Err(Error::Numerical(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
