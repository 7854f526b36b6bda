use std::io::Write;

use serde::Serialize;

use super::{AlphaMax, BoundPoint, ProbBoundResult, StabilityConstants};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::to_rows;

/// Writes `t,lhs,rhs,active_branch` rows, naming the branch.
pub fn write_bound_csv<W: Write>(mut out: W, points: &[BoundPoint], names: &[&str]) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<bound csv>", e);
    writeln!(out, "t,lhs,rhs,active_branch").map_err(io)?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{}",
            p.t,
            fmt_f64(p.lhs),
            fmt_f64(p.rhs),
            names.get(p.active_branch).copied().unwrap_or("unknown")
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Structured-text summary of every constant behind a bound report.
#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub eta: f64,
    pub p1: Vec<Vec<f64>>,
    pub p2: Vec<Vec<f64>>,
    pub lambda_max: f64,
    pub mu: f64,
    pub m_bar: usize,
    pub horizon: usize,
    pub horizon_sufficient: bool,
    pub q_max_inv: Vec<Vec<f64>>,
    pub r_max_inv: Vec<Vec<f64>>,
    pub q_min_inv: Vec<Vec<f64>>,
    pub r_min_inv: Vec<Vec<f64>>,
    pub alpha: AlphaMax,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilistic: Option<ProbBoundResult>,
    pub theorem_violations: usize,
    pub corollary_violations: usize,
}

impl BoundSummary {
    pub fn new(
        consts: &StabilityConstants,
        horizon: usize,
        probabilistic: Option<ProbBoundResult>,
        theorem: &[BoundPoint],
        corollary: &[BoundPoint],
    ) -> Self {
        let violations = |pts: &[BoundPoint]| pts.iter().filter(|p| !p.holds()).count();
        BoundSummary {
            eta: consts.detectability.eta,
            p1: to_rows(&consts.detectability.p1),
            p2: to_rows(&consts.detectability.p2),
            lambda_max: consts.lambda_max,
            mu: consts.mu,
            m_bar: consts.m_bar,
            horizon,
            horizon_sufficient: horizon >= consts.m_bar,
            q_max_inv: to_rows(&consts.extremal.q_max_inv),
            r_max_inv: to_rows(&consts.extremal.r_max_inv),
            q_min_inv: to_rows(&consts.extremal.q_min_inv),
            r_min_inv: to_rows(&consts.extremal.r_min_inv),
            alpha: consts.alpha.clone(),
            probabilistic,
            theorem_violations: violations(theorem),
            corollary_violations: violations(corollary),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::numerical(format!("cannot encode bound summary: {e}")))
    }
}
