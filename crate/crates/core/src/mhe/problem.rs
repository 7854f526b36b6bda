use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{Measurement, MheConfig, ModelInterface, StageEval};
use crate::error::{ensure_dim, Error, Result};

/// `2η^{j−1}` for the window stage `k` (0-based), `j = M_t − k`.
pub(crate) fn stage_coefficient(eta: f64, mt: usize, k: usize) -> f64 {
    2.0 * eta.powi((mt - k - 1) as i32)
}

/// `2η^{M_t}`. `0⁰ = 1` so an empty window keeps the prior term.
pub(crate) fn prior_coefficient(eta: f64, mt: usize) -> f64 {
    2.0 * eta.powi(mt as i32)
}

fn chol(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::numerical(format!("{what} weight is not positive definite")))
}

/// `xᵀ A⁻¹ x` through a Cholesky factor.
fn inv_quad(c: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    let y = c
        .l_dirty()
        .solve_lower_triangular(x)
        .expect("factor has positive pivots");
    y.norm_squared()
}

/// A fixed problem instance: config, model, prior and window measurements.
pub(crate) struct Problem<'a, M: ModelInterface + ?Sized> {
    pub config: &'a MheConfig,
    pub model: &'a M,
    pub prior: &'a DVector<f64>,
    pub window: &'a [Measurement],
}

/// Everything computed at one iterate.
pub(crate) struct Evaluation {
    pub cost: f64,
    pub stages: Vec<StageEval>,
    pub w: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

impl<M: ModelInterface + ?Sized> Problem<'_, M> {
    pub fn horizon(&self) -> usize {
        self.window.len()
    }

    pub fn n(&self) -> usize {
        self.config.state_dim()
    }

    pub fn check(&self) -> Result<()> {
        let (n, m, p) = (
            self.model.state_dim(),
            self.model.input_dim(),
            self.model.output_dim(),
        );
        ensure_dim("model state dimension vs. box", self.config.state_dim(), n)?;
        ensure_dim("prior", n, self.prior.len())?;
        for (k, meas) in self.window.iter().enumerate() {
            if meas.input.len() != m || meas.output.len() != p {
                return Err(Error::contract(format!(
                    "window measurement {k}: expected input dim {m} and output dim {p}"
                )));
            }
        }
        Ok(())
    }

    /// Splits a flat decision vector into window states.
    pub fn states<'z>(&self, z: &'z [f64]) -> impl Iterator<Item = &'z [f64]> {
        z.chunks(self.n())
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        let n = self.n();
        let mt = self.horizon();
        let eta = self.config.eta;
        let xs: Vec<&[f64]> = self.states(z).collect();
        let e0 = DVector::from_column_slice(xs[0]) - self.prior;
        let mut cost = prior_coefficient(eta, mt) * e0.dot(&(&self.config.p2 * &e0));
        let mut stages = Vec::with_capacity(mt);
        let mut ws = Vec::with_capacity(mt);
        let mut vs = Vec::with_capacity(mt);
        for (k, meas) in self.window.iter().enumerate() {
            let st = self.model.stage(xs[k], &meas.input)?;
            let w = DVector::from_column_slice(xs[k + 1]) - &st.state_mean;
            let v = DVector::from_column_slice(&meas.output) - &st.output_mean;
            let cq = chol(&st.weight_q, "Q")?;
            let cr = chol(&st.weight_r, "R")?;
            cost += stage_coefficient(eta, mt, k) * (inv_quad(&cq, &w) + inv_quad(&cr, &v));
            debug_assert_eq!(w.len(), n);
            stages.push(st);
            ws.push(w);
            vs.push(v);
        }
        Ok(Evaluation {
            cost,
            stages,
            w: ws,
            v: vs,
        })
    }

    /// Residual vector `r` with `‖r‖² = cost` and its Jacobian with the
    /// weights frozen at the current iterate.
    pub fn linearize(&self, ev: &Evaluation, z: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        let mt = self.horizon();
        let p = self.model.output_dim();
        let eta = self.config.eta;
        let rows = n + mt * (n + p);
        let cols = n * (mt + 1);
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, cols);

        // prior: c·Lᵀ(x0 − prior), P2 = L Lᵀ
        let cp = prior_coefficient(eta, mt).sqrt();
        let lp = chol(&self.config.p2, "P2")?.l();
        let e0 = DVector::from_column_slice(&z[..n]) - self.prior;
        let ltp = lp.transpose() * cp;
        r.rows_mut(0, n).copy_from(&(&ltp * e0));
        jac.view_mut((0, 0), (n, n)).copy_from(&ltp);

        let mut row = n;
        for k in 0..mt {
            let st = &ev.stages[k];
            let c = stage_coefficient(eta, mt, k).sqrt();
            // Q = L Lᵀ  ⇒  wᵀQ⁻¹w = ‖L⁻¹w‖²
            let lq_inv = chol(&st.weight_q, "Q")?
                .l()
                .try_inverse()
                .ok_or_else(|| Error::numerical("singular Q factor"))?
                * c;
            let lr_inv = chol(&st.weight_r, "R")?
                .l()
                .try_inverse()
                .ok_or_else(|| Error::numerical("singular R factor"))?
                * c;
            r.rows_mut(row, n).copy_from(&(&lq_inv * &ev.w[k]));
            jac.view_mut((row, (k + 1) * n), (n, n)).copy_from(&lq_inv);
            jac.view_mut((row, k * n), (n, n))
                .copy_from(&(-(&lq_inv * &st.state_jacobian)));
            row += n;
            r.rows_mut(row, p).copy_from(&(&lr_inv * &ev.v[k]));
            jac.view_mut((row, k * n), (p, n))
                .copy_from(&(-(&lr_inv * &st.output_jacobian)));
            row += p;
        }
        Ok((r, jac))
    }

    /// Gradient of the true cost: the frozen-weight part `2Jᵀr` plus the
    /// dependence of `Q_d⁻¹`, `R_d⁻¹` on the stage state, by central
    /// differences of the weighted quadratic forms with `w`, `v` held fixed.
    pub fn true_gradient(
        &self,
        ev: &Evaluation,
        z: &[f64],
        r: &DVector<f64>,
        jac: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        let mut g = jac.transpose() * r * 2.0;
        if self.model.constant_weights() {
            return Ok(g);
        }
        let n = self.n();
        let mt = self.horizon();
        for k in 0..mt {
            let coef = stage_coefficient(self.config.eta, mt, k);
            if coef == 0.0 {
                continue;
            }
            let u = &self.window[k].input;
            let mut x = z[k * n..(k + 1) * n].to_vec();
            for i in 0..n {
                let x0 = x[i];
                let h = 1e-6 * (1.0 + x0.abs());
                let mut form = |xi: f64| -> Result<f64> {
                    x[i] = xi;
                    let (q, rr) = self.model.weights(&x, u)?;
                    Ok(inv_quad(&chol(&q, "Q")?, &ev.w[k]) + inv_quad(&chol(&rr, "R")?, &ev.v[k]))
                };
                let plus = form(x0 + h)?;
                let minus = form(x0 - h)?;
                x[i] = x0;
                g[k * n + i] += coef * (plus - minus) / (2.0 * h);
            }
        }
        Ok(g)
    }

    /// ∞-norm of `z − Π(z − g)`.
    pub fn projected_gradient_norm(&self, z: &[f64], g: &DVector<f64>) -> f64 {
        let b = &self.config.state_box;
        let n = self.n();
        z.iter()
            .enumerate()
            .map(|(i, zi)| {
                let a = i % n;
                let moved = (zi - g[i]).clamp(b.lower[a], b.upper[a]);
                (zi - moved).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Value of the MHE cost for a candidate window state sequence.
pub fn cost<M: ModelInterface + ?Sized>(
    config: &MheConfig,
    model: &M,
    prior: &DVector<f64>,
    window: &[Measurement],
    x_seq: &[DVector<f64>],
) -> Result<f64> {
    if x_seq.len() != window.len() + 1 {
        return Err(Error::contract(format!(
            "state sequence has {} entries, window needs {}",
            x_seq.len(),
            window.len() + 1
        )));
    }
    let problem = Problem {
        config,
        model,
        prior,
        window,
    };
    problem.check()?;
    for x in x_seq {
        ensure_dim("window state", config.state_dim(), x.len())?;
    }
    let z: Vec<f64> = x_seq.iter().flat_map(|x| x.iter().copied()).collect();
    Ok(problem.evaluate(&z)?.cost)
}

/// Eliminated disturbances `(w̄, v̄)` of a window state sequence.
pub fn residuals<M: ModelInterface + ?Sized>(
    model: &M,
    window: &[Measurement],
    x_seq: &[DVector<f64>],
) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
    if x_seq.len() != window.len() + 1 {
        return Err(Error::contract(
            "state sequence must be one longer than the window",
        ));
    }
    let mut ws = Vec::with_capacity(window.len());
    let mut vs = Vec::with_capacity(window.len());
    for (k, meas) in window.iter().enumerate() {
        let fx = model.state_mean(x_seq[k].as_slice(), &meas.input)?;
        let hx = model.output_mean(x_seq[k].as_slice(), &meas.input)?;
        ws.push(&x_seq[k + 1] - fx);
        vs.push(DVector::from_column_slice(&meas.output) - hx);
    }
    Ok((ws, vs))
}
