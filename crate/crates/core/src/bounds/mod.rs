//! Stability constants and error bounds for GP-based MHE.
//!
//! Covers the minimal horizon and contraction rate from the detectability
//! constants, the model-mismatch constants `α_max`, the deterministic error
//! bound trajectory and its probabilistic counterpart built from the covering
//! number, `β`, `γ` and `Δ`.

mod grid;
mod report;

pub use grid::{refine_max, Grid};
pub use report::{write_bound_csv, BoundSummary};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::boxset::BoxSet;
use crate::dynamics::TrueSystem;
use crate::error::{Error, Result};
use crate::gp::TrainedGp;
use crate::linalg::{max_eigenvalue, max_generalized_eigenvalue, min_eigenvalue, weighted_norm};
use crate::model::{ExtremalWeights, GpStateSpaceModel};

/// `P1`, `P2` and `η` of the assumed δ-IOSS Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectabilityConfig {
    #[serde(with = "crate::linalg::serde_rows")]
    pub p1: DMatrix<f64>,
    #[serde(with = "crate::linalg::serde_rows")]
    pub p2: DMatrix<f64>,
    pub eta: f64,
}

impl DetectabilityConfig {
    pub fn identity(n: usize, eta: f64) -> Self {
        DetectabilityConfig {
            p1: DMatrix::identity(n, n),
            p2: DMatrix::identity(n, n),
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.p1.nrows();
        for (name, m) in [("P1", &self.p1), ("P2", &self.p2)] {
            if m.shape() != (n, n) || !crate::linalg::is_positive_definite(m) {
                return Err(Error::config(format!(
                    "{name} must be a {n}x{n} positive definite matrix"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.eta) {
            return Err(Error::config(format!(
                "eta must lie in [0, 1), got {}",
                self.eta
            )));
        }
        if min_eigenvalue(&(&self.p2 - &self.p1)) < -1e-10 {
            return Err(Error::config("P1 must not exceed P2 in the PSD order"));
        }
        Ok(())
    }

    /// `λ_max(P2, P1)`.
    pub fn lambda_max(&self) -> Result<f64> {
        max_generalized_eigenvalue(&self.p2, &self.p1)
    }
}

/// Smallest `M ≥ 1` with `4 λ_max(P2, P1) η^M < 1`, and
/// `μ = (4 λ_max η^M)^{1/M}`.
pub fn minimal_horizon(cfg: &DetectabilityConfig) -> Result<(f64, usize)> {
    cfg.validate()?;
    let lam = cfg.lambda_max()?;
    if cfg.eta == 0.0 {
        return Ok((0.0, 1));
    }
    let holds = |m: usize| 4.0 * lam * cfg.eta.powi(m as i32) < 1.0;
    let guess = ((4.0 * lam).ln() / (1.0 / cfg.eta).ln()).floor().max(0.0) as usize + 1;
    let mut m = guess.max(1);
    while !holds(m) {
        m += 1;
    }
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    let mu = (4.0 * lam * cfg.eta.powi(m as i32)).powf(1.0 / m as f64);
    Ok((mu, m))
}

/// Model-mismatch constants maximized over a grid on `X × U` and refined by
/// local search from the best grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMax {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha: f64,
    /// Grid maxima before refinement.
    pub alpha1_grid: f64,
    pub alpha2_grid: f64,
    pub resolution: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl AlphaMax {
    /// `α = 0`, for an exact model.
    pub fn zero() -> Self {
        AlphaMax {
            alpha1: 0.0,
            alpha2: 0.0,
            alpha: 0.0,
            alpha1_grid: 0.0,
            alpha2_grid: 0.0,
            resolution: Vec::new(),
            spacing: Vec::new(),
        }
    }
}

/// `α1 = max ‖f(x,u) − m_x(d)‖_{Q_max⁻¹}` and `α2 = max ‖h(x,u) − m_y(d)‖_{R_max⁻¹}`
/// over `X × U`.
pub fn alpha_max(
    model: &GpStateSpaceModel,
    truth: &dyn TrueSystem,
    x_box: &BoxSet,
    u_box: &BoxSet,
    resolution: &[usize],
) -> Result<AlphaMax> {
    let (n, m) = (model.state_dim(), model.input_dim());
    if truth.state_dim() != n || truth.input_dim() != m || truth.output_dim() != model.output_dim()
    {
        return Err(Error::contract("true system and model dimensions differ"));
    }
    if x_box.dim() != n || u_box.dim() != m {
        return Err(Error::config("state or input box has the wrong dimension"));
    }
    let ext = model.extremal_weights();
    let space = x_box.product(u_box);
    let grid = Grid::new(&space, resolution)?;
    let spacing = grid.spacing();

    let mismatch_f = |d: &[f64]| -> Result<f64> {
        let diff = truth.transition(&d[..n], &d[n..]) - model.predict_state(d)?.0;
        Ok(weighted_norm(&diff, &ext.q_max_inv))
    };
    let mismatch_h = |d: &[f64]| -> Result<f64> {
        let diff = truth.output(&d[..n], &d[n..]) - model.predict_output(d)?.0;
        Ok(weighted_norm(&diff, &ext.r_max_inv))
    };
    let (g1, x1) = grid.maximize(mismatch_f)?;
    let (a1, _) = refine_max(&space, x1, g1, &spacing, mismatch_f)?;
    let (g2, x2) = grid.maximize(mismatch_h)?;
    let (a2, _) = refine_max(&space, x2, g2, &spacing, mismatch_h)?;
    Ok(AlphaMax {
        alpha1: a1,
        alpha2: a2,
        alpha: a1.max(a2),
        alpha1_grid: g1,
        alpha2_grid: g2,
        resolution: resolution.to_vec(),
        spacing,
    })
}

/// Everything the deterministic bound needs.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConstants {
    pub detectability: DetectabilityConfig,
    pub mu: f64,
    pub m_bar: usize,
    pub lambda_max: f64,
    pub alpha: AlphaMax,
    pub extremal: ExtremalWeights,
}

impl StabilityConstants {
    pub fn new(
        detectability: DetectabilityConfig,
        alpha: AlphaMax,
        extremal: ExtremalWeights,
    ) -> Result<Self> {
        let (mu, m_bar) = minimal_horizon(&detectability)?;
        let lambda_max = detectability.lambda_max()?;
        Ok(StabilityConstants {
            detectability,
            mu,
            m_bar,
            lambda_max,
            alpha,
            extremal,
        })
    }

    /// `12 / (1 − μ^{1/4})`.
    pub fn gain(&self) -> f64 {
        12.0 / (1.0 - self.mu.powf(0.25))
    }
}

/// Extremal weights of a model with constant weights `Q0`, `R0`.
pub fn constant_extremal_weights(q0: &DMatrix<f64>, r0: &DMatrix<f64>) -> Result<ExtremalWeights> {
    let inv = |m: &DMatrix<f64>, what: &str| {
        m.clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::config(format!("{what} must be positive definite")))
    };
    let q = inv(q0, "Q0")?;
    let r = inv(r0, "R0")?;
    Ok(ExtremalWeights {
        q_min_inv: q.clone(),
        q_max_inv: q,
        r_min_inv: r.clone(),
        r_max_inv: r,
    })
}

/// Axis grid with spacing `2τ/√n_d`, so every point of the box lies within
/// `τ` of a grid point: `∏ max(1, ⌈w_i √n_d / (2τ)⌉)`.
pub fn covering_number(bounds: &BoxSet, tau: f64) -> Result<u64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("tau must be positive, got {tau}")));
    }
    let root = (bounds.dim() as f64).sqrt();
    bounds.widths().try_fold(1u64, |acc, w| {
        let k = (w * root / (2.0 * tau)).ceil().max(1.0);
        if k > u64::MAX as f64 {
            return Err(Error::config("covering number overflows"));
        }
        acc.checked_mul(k as u64)
            .ok_or_else(|| Error::config("covering number overflows"))
    })
}

/// `β = 2 ln(B/δ)`.
pub fn beta(covering: u64, delta: f64) -> Result<f64> {
    if covering == 0 {
        return Err(Error::config("covering number must be at least 1"));
    }
    check_delta(delta)?;
    Ok(2.0 * (covering as f64 / delta).ln())
}

/// `(1 − δ)^{n+p}`.
pub fn probability(n: usize, p: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok((1.0 - delta).powi((n + p) as i32))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "delta must lie in (0, 1), got {delta}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbBoundConfig {
    pub tau: f64,
    pub delta: f64,
    /// Lipschitz constants of the true `f_i`; taken from the system's
    /// analytic helper when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_f: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_h: Option<Vec<f64>>,
    /// Points per axis of the grid on `X × U`.
    pub grid_resolution: Vec<usize>,
}

impl ProbBoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau must be positive"));
        }
        check_delta(self.delta)?;
        for l in self.lipschitz_f.iter().chain(&self.lipschitz_h).flatten() {
            if !(*l >= 0.0 && l.is_finite()) {
                return Err(Error::config(
                    "Lipschitz constants must be finite and nonnegative",
                ));
            }
        }
        Ok(())
    }

    /// Configured Lipschitz constants, falling back to `truth`.
    pub fn lipschitz(
        &self,
        truth: Option<&dyn TrueSystem>,
        x_box: &BoxSet,
        u_box: &BoxSet,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let analytic = || truth.and_then(|t| t.lipschitz(x_box, u_box));
        let (lf, lh) = match (&self.lipschitz_f, &self.lipschitz_h) {
            (Some(f), Some(h)) => (f.clone(), h.clone()),
            (f, h) => {
                let a = analytic().ok_or_else(|| {
                    Error::config("Lipschitz constants of the true system are missing")
                })?;
                (f.clone().unwrap_or(a.0), h.clone().unwrap_or(a.1))
            }
        };
        Ok((lf, lh))
    }
}

/// Per-component ingredients of `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTerms {
    pub covering: u64,
    pub beta: f64,
    pub gammas_f: Vec<f64>,
    pub gammas_h: Vec<f64>,
    /// Largest mean-gradient norm.
    pub l_mean_f: Vec<f64>,
    pub l_mean_h: Vec<f64>,
    /// Largest change of the posterior standard deviation over distance `τ`.
    pub omega_f: Vec<f64>,
    pub omega_h: Vec<f64>,
    pub lipschitz_f: Vec<f64>,
    pub lipschitz_h: Vec<f64>,
}

/// Sample directions for the modulus of continuity: the axes, plus the
/// diagonals in up to four dimensions.
fn directions(nd: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for a in 0..nd {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; nd];
            e[a] = s;
            dirs.push(e);
        }
    }
    if (2..=4).contains(&nd) {
        let scale = 1.0 / (nd as f64).sqrt();
        for mask in 0..(1usize << nd) {
            dirs.push(
                (0..nd)
                    .map(|a| if mask >> a & 1 == 1 { -scale } else { scale })
                    .collect(),
            );
        }
    }
    dirs
}

fn posterior_std(gp: &TrainedGp, d: &[f64]) -> Result<f64> {
    Ok(gp.posterior_var(d)?.sqrt())
}

/// `L` and `ω(τ)` for one GP over the grid.
fn continuity(gp: &TrainedGp, grid: &Grid<'_>, tau: f64) -> Result<(f64, f64)> {
    let grad_norm = |d: &[f64]| Ok(gp.posterior_mean_grad(d)?.norm());
    let (g, x) = grid.maximize(grad_norm)?;
    let (l_mean, _) = refine_max(grid.bounds, x, g, &grid.spacing(), grad_norm)?;

    let dirs = directions(grid.bounds.dim());
    let (omega, _) = grid.maximize(|d| {
        let s = posterior_std(gp, d)?;
        let mut worst: f64 = 0.0;
        for dir in &dirs {
            let mut other: Vec<f64> = d.iter().zip(dir).map(|(a, b)| a + tau * b).collect();
            grid.bounds.project(&mut other);
            worst = worst.max((posterior_std(gp, &other)? - s).abs());
        }
        Ok(worst)
    })?;
    Ok((l_mean, omega))
}

/// `γ = (L_mean + L_true)·τ + √β·ω_σ(τ)` for every state and output
/// component.
pub fn gamma_terms(
    model: &GpStateSpaceModel,
    cfg: &ProbBoundConfig,
    x_box: &BoxSet,
    u_box: &BoxSet,
    truth: Option<&dyn TrueSystem>,
) -> Result<GammaTerms> {
    cfg.validate()?;
    let (n, p) = (model.state_dim(), model.output_dim());
    let (lf, lh) = cfg.lipschitz(truth, x_box, u_box)?;
    if lf.len() != n || lh.len() != p {
        return Err(Error::config(format!(
            "expected {n} state and {p} output Lipschitz constants, got {} and {}",
            lf.len(),
            lh.len()
        )));
    }
    let space = x_box.product(u_box);
    let grid = Grid::new(&space, &cfg.grid_resolution)?;
    let covering = covering_number(&space, cfg.tau)?;
    let b = beta(covering, cfg.delta)?;

    let per = |gps: &[TrainedGp], lip: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut gammas = Vec::new();
        let mut ls = Vec::new();
        let mut omegas = Vec::new();
        for (gp, l_true) in gps.iter().zip(lip) {
            let (l_mean, omega) = continuity(gp, &grid, cfg.tau)?;
            gammas.push((l_mean + l_true) * cfg.tau + b.sqrt() * omega);
            ls.push(l_mean);
            omegas.push(omega);
        }
        Ok((gammas, ls, omegas))
    };
    let (gammas_f, l_mean_f, omega_f) = per(model.state_gps(), &lf)?;
    let (gammas_h, l_mean_h, omega_h) = per(model.output_gps(), &lh)?;
    Ok(GammaTerms {
        covering,
        beta: b,
        gammas_f,
        gammas_h,
        l_mean_f,
        l_mean_h,
        omega_f,
        omega_h,
        lipschitz_f: lf,
        lipschitz_h: lh,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbBoundResult {
    pub tau: f64,
    pub delta: f64,
    pub terms: GammaTerms,
    /// Largest posterior standard deviation per component.
    pub sigma_max_f: Vec<f64>,
    pub sigma_max_h: Vec<f64>,
    pub delta_x_max: f64,
    pub delta_y_max: f64,
    pub probability: f64,
    pub grid_resolution: Vec<usize>,
    pub grid_spacing: Vec<f64>,
}

/// `Δ_x = √λ_max(Q_max⁻¹)·Σ_i max (√β σ_{x_i} + γ_{f_i})`, `Δ_y` alike, and
/// the joint probability `(1 − δ)^{n+p}`.
pub fn delta_max(
    model: &GpStateSpaceModel,
    cfg: &ProbBoundConfig,
    x_box: &BoxSet,
    u_box: &BoxSet,
    truth: Option<&dyn TrueSystem>,
) -> Result<ProbBoundResult> {
    let terms = gamma_terms(model, cfg, x_box, u_box, truth)?;
    let space = x_box.product(u_box);
    let grid = Grid::new(&space, &cfg.grid_resolution)?;
    let spacing = grid.spacing();
    let sigma_max = |gps: &[TrainedGp]| -> Result<Vec<f64>> {
        gps.iter()
            .map(|gp| {
                let f = |d: &[f64]| posterior_std(gp, d);
                let (g, x) = grid.maximize(f)?;
                Ok(refine_max(&space, x, g, &spacing, f)?.0)
            })
            .collect()
    };
    let sigma_max_f = sigma_max(model.state_gps())?;
    let sigma_max_h = sigma_max(model.output_gps())?;
    let ext = model.extremal_weights();
    let root_beta = terms.beta.sqrt();
    let total = |sig: &[f64], gam: &[f64]| -> f64 {
        sig.iter().zip(gam).map(|(s, g)| root_beta * s + g).sum()
    };
    let delta_x_max =
        max_eigenvalue(&ext.q_max_inv).max(0.0).sqrt() * total(&sigma_max_f, &terms.gammas_f);
    let delta_y_max =
        max_eigenvalue(&ext.r_max_inv).max(0.0).sqrt() * total(&sigma_max_h, &terms.gammas_h);
    Ok(ProbBoundResult {
        tau: cfg.tau,
        delta: cfg.delta,
        sigma_max_f,
        sigma_max_h,
        delta_x_max,
        delta_y_max,
        probability: probability(model.state_dim(), model.output_dim(), cfg.delta)?,
        grid_resolution: cfg.grid_resolution.clone(),
        grid_spacing: spacing,
        terms,
    })
}

/// True and estimated trajectories of one run with the realized noises.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    /// `x(0) .. x(T)`.
    pub true_states: &'a [Vec<f64>],
    /// `x̂(0) .. x̂(T)`.
    pub estimates: &'a [Vec<f64>],
    pub process_noise: &'a [Vec<f64>],
    pub measurement_noise: &'a [Vec<f64>],
}

impl BoundInputs<'_> {
    fn check(&self) -> Result<()> {
        let steps = self.true_states.len().saturating_sub(1);
        if self.true_states.is_empty()
            || self.estimates.len() != self.true_states.len()
            || self.process_noise.len() < steps
            || self.measurement_noise.len() < steps
        {
            return Err(Error::contract(
                "bound inputs need T+1 true states and estimates and T noise samples",
            ));
        }
        Ok(())
    }
}

/// One time step of a bound trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub t: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// Value of every branch; `rhs` is their maximum.
    pub branches: Vec<f64>,
    /// Index of the branch attaining `rhs` (lowest on ties).
    pub active_branch: usize,
}

impl BoundPoint {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

pub const THEOREM_BRANCHES: [&str; 4] = ["initial", "process_noise", "measurement_noise", "alpha"];
pub const COROLLARY_BRANCHES: [&str; 5] = [
    "initial",
    "process_noise",
    "measurement_noise",
    "delta_x",
    "delta_y",
];

fn vec_of(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// The initial-error and noise branches shared by both bounds, per `t`.
fn common_branches(run: &BoundInputs<'_>, consts: &StabilityConstants) -> Vec<(f64, [f64; 3])> {
    let det = &consts.detectability;
    let e0 = vec_of(&run.estimates[0]) - vec_of(&run.true_states[0]);
    let init0 = weighted_norm(&e0, &det.p2);
    let mu = consts.mu;
    let gain = consts.gain();
    let w_norm: Vec<f64> = run
        .process_noise
        .iter()
        .map(|w| weighted_norm(&vec_of(w), &consts.extremal.q_max_inv))
        .collect();
    let v_norm: Vec<f64> = run
        .measurement_noise
        .iter()
        .map(|v| weighted_norm(&vec_of(v), &consts.extremal.r_max_inv))
        .collect();
    (0..run.true_states.len())
        .map(|t| {
            let e = vec_of(&run.estimates[t]) - vec_of(&run.true_states[t]);
            let lhs = weighted_norm(&e, &det.p1);
            let init = 6.0 * mu.sqrt().powi(t as i32) * init0;
            let noise = |norms: &[f64]| {
                (0..t)
                    .map(|q| gain * mu.powf(0.25).powi(q as i32) * norms[t - q - 1])
                    .fold(0.0, f64::max)
            };
            (lhs, [init, noise(&w_norm), noise(&v_norm)])
        })
        .collect()
}

fn point(t: usize, lhs: f64, branches: Vec<f64>) -> BoundPoint {
    let (active_branch, rhs) =
        branches
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            });
    BoundPoint {
        t,
        lhs,
        rhs,
        branches,
        active_branch,
    }
}

/// `‖x̂(t) − x(t)‖_{P1}` against the deterministic bound with branches
/// [`THEOREM_BRANCHES`].
pub fn error_bound_trajectory(
    run: &BoundInputs<'_>,
    consts: &StabilityConstants,
) -> Result<Vec<BoundPoint>> {
    run.check()?;
    let offset = consts.gain() * consts.alpha.alpha;
    Ok(common_branches(run, consts)
        .into_iter()
        .enumerate()
        .map(|(t, (lhs, b))| point(t, lhs, vec![b[0], b[1], b[2], offset]))
        .collect())
}

/// The probabilistic bound with branches [`COROLLARY_BRANCHES`]; it holds
/// with probability `pb.probability`.
pub fn probabilistic_bound_trajectory(
    run: &BoundInputs<'_>,
    consts: &StabilityConstants,
    pb: &ProbBoundResult,
) -> Result<Vec<BoundPoint>> {
    run.check()?;
    let gain = consts.gain();
    let (dx, dy) = (gain * pb.delta_x_max, gain * pb.delta_y_max);
    Ok(common_branches(run, consts)
        .into_iter()
        .enumerate()
        .map(|(t, (lhs, b))| point(t, lhs, vec![b[0], b[1], b[2], dx, dy]))
        .collect())
}
