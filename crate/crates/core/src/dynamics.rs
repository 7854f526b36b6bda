//! Ground-truth systems `x⁺ = f(x, u) + w`, `y = h(x, u) + v`, the batch
//! reactor benchmark and seeded trajectory generation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boxset::BoxSet;
use crate::error::{ensure_dim, Error, Result};
use crate::io::{fmt_f64, parse_field, write_atomic};
use crate::rng::{stream_id, stream_rng};

/// A known discrete-time system. Implementations must be pure.
pub trait TrueSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    fn transition(&self, x: &[f64], u: &[f64]) -> DVector<f64>;
    fn output(&self, x: &[f64], u: &[f64]) -> DVector<f64>;

    /// `∂f/∂x`, `n × n`.
    fn transition_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64>;
    /// `∂h/∂x`, `p × n`.
    fn output_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64>;

    /// Per-component Lipschitz constants `(L_f, L_h)` on `states × inputs`,
    /// when known in closed form.
    fn lipschitz(&self, _states: &BoxSet, _inputs: &BoxSet) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// Euler-discretized batch reactor `2A ⇌ B` with output `y = x1 + x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchReactor {
    pub sample_time: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for BatchReactor {
    fn default() -> Self {
        BatchReactor {
            sample_time: 0.1,
            k1: 0.16,
            k2: 0.0064,
        }
    }
}

pub fn batch_reactor() -> BatchReactor {
    BatchReactor::default()
}

impl TrueSystem for BatchReactor {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        0
    }
    fn output_dim(&self) -> usize {
        1
    }

    fn transition(&self, x: &[f64], _u: &[f64]) -> DVector<f64> {
        let (t, k1, k2) = (self.sample_time, self.k1, self.k2);
        let r = k1 * x[0] * x[0];
        DVector::from_vec(vec![
            x[0] + t * (-2.0 * r + 2.0 * k2 * x[1]),
            x[1] + t * (r - k2 * x[1]),
        ])
    }

    fn output(&self, x: &[f64], _u: &[f64]) -> DVector<f64> {
        DVector::from_element(1, x[0] + x[1])
    }

    fn transition_jacobian(&self, x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        let (t, k1, k2) = (self.sample_time, self.k1, self.k2);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0 - 4.0 * t * k1 * x[0],
                2.0 * t * k2,
                2.0 * t * k1 * x[0],
                1.0 - t * k2,
            ],
        )
    }

    fn output_jacobian(&self, _x: &[f64], _u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[1.0, 1.0])
    }

    /// Supremum of the Euclidean gradient norm over the box. Each gradient
    /// depends on `x1` only through an affine term, so the sup sits at an
    /// endpoint of the `x1` interval.
    fn lipschitz(&self, states: &BoxSet, _inputs: &BoxSet) -> Option<(Vec<f64>, Vec<f64>)> {
        let (t, k1, k2) = (self.sample_time, self.k1, self.k2);
        let ends = [states.lower[0], states.upper[0]];
        let g1 = ends
            .iter()
            .map(|x1| (1.0 - 4.0 * t * k1 * x1).hypot(2.0 * t * k2))
            .fold(0.0, f64::max);
        let g2 = ends
            .iter()
            .map(|x1| (2.0 * t * k1 * x1).hypot(1.0 - t * k2))
            .fold(0.0, f64::max);
        Some((vec![g1, g2], vec![2f64.sqrt()]))
    }
}

/// Isotropic Gaussian noise levels and the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            sigma_w: 0.0,
            sigma_v: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_w >= 0.0
            && self.sigma_w.is_finite()
            && self.sigma_v >= 0.0
            && self.sigma_v.is_finite())
        {
            return Err(Error::config(
                "noise standard deviations must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// A simulated run: `T+1` states, `T` inputs/outputs and the noise realizations
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub process_noise: Vec<Vec<f64>>,
    pub measurement_noise: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.measurement_noise.first().map_or(0, |v| v.len())
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |v| v.len())
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.inputs.len();
        if self.states.len() != t + 1
            || self.outputs.len() != t
            || self.process_noise.len() != t
            || self.measurement_noise.len() != t
        {
            return Err(Error::contract(format!(
                "trajectory lengths inconsistent: {} states, {} inputs, {} outputs, {} w, {} v",
                self.states.len(),
                t,
                self.outputs.len(),
                self.process_noise.len(),
                self.measurement_noise.len()
            )));
        }
        let n = self.state_dim();
        if self
            .states
            .iter()
            .chain(&self.process_noise)
            .any(|s| s.len() != n)
        {
            return Err(Error::contract(
                "trajectory state/process-noise dimensions differ",
            ));
        }
        Ok(())
    }
}

/// Rolls the system forward with Gaussian `w`, `v` drawn from the ChaCha
/// stream `(noise.seed, stream)`. Per step, `v(t)` is drawn before `w(t)`.
///
/// States are not projected onto `state_box`; leaving it only logs a warning.
pub fn simulate(
    sys: &dyn TrueSystem,
    x0: &[f64],
    inputs: &[Vec<f64>],
    steps: usize,
    noise: &NoiseSpec,
    stream: u64,
    state_box: Option<&BoxSet>,
) -> Result<Trajectory> {
    noise.validate()?;
    let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());
    ensure_dim("initial state", n, x0.len())?;
    if let Some(b) = state_box {
        if !b.contains(x0, 0.0) {
            return Err(Error::contract(format!(
                "initial state {x0:?} is outside the state box"
            )));
        }
    }
    let inputs: Vec<Vec<f64>> = if m == 0 {
        vec![Vec::new(); steps]
    } else {
        if inputs.len() < steps {
            return Err(Error::contract(format!(
                "need {steps} inputs, got {}",
                inputs.len()
            )));
        }
        for u in &inputs[..steps] {
            ensure_dim("control input", m, u.len())?;
        }
        inputs[..steps].to_vec()
    };

    let mut rng = stream_rng(noise.seed, stream);
    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps);
    let mut ws = Vec::with_capacity(steps);
    let mut vs = Vec::with_capacity(steps);
    states.push(x0.to_vec());
    let mut warned = false;
    for (t, u) in inputs.iter().enumerate() {
        let x = &states[t];
        let v: Vec<f64> = (0..p)
            .map(|_| {
                noise.sigma_v * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect();
        let w: Vec<f64> = (0..n)
            .map(|_| {
                noise.sigma_w * {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z
                }
            })
            .collect();
        let y: Vec<f64> = sys
            .output(x, u)
            .iter()
            .zip(&v)
            .map(|(h, v)| h + v)
            .collect();
        let next: Vec<f64> = sys
            .transition(x, u)
            .iter()
            .zip(&w)
            .map(|(f, w)| f + w)
            .collect();
        if next.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::numerical(format!(
                "simulation produced a non-finite value at step {t}"
            )));
        }
        if let Some(b) = state_box {
            if !warned && !b.contains(&next, 0.0) {
                log::warn!("state left the box at t = {}: {next:?}", t + 1);
                warned = true;
            }
        }
        outputs.push(y);
        ws.push(w);
        vs.push(v);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs,
        outputs,
        process_noise: ws,
        measurement_noise: vs,
    })
}

/// Recomputes states and outputs from `x0`, the inputs and recorded noises.
pub fn replay(sys: &dyn TrueSystem, traj: &Trajectory) -> Trajectory {
    let mut states = vec![traj.states[0].clone()];
    let mut outputs = Vec::with_capacity(traj.steps());
    for t in 0..traj.steps() {
        let x = &states[t];
        let u = &traj.inputs[t];
        outputs.push(
            sys.output(x, u)
                .iter()
                .zip(&traj.measurement_noise[t])
                .map(|(h, v)| h + v)
                .collect(),
        );
        let next = sys
            .transition(x, u)
            .iter()
            .zip(&traj.process_noise[t])
            .map(|(f, w)| f + w)
            .collect();
        states.push(next);
    }
    Trajectory {
        states,
        outputs,
        ..traj.clone()
    }
}

/// One trajectory per initial condition; trajectory `k` uses stream
/// `stream_id(group, k)` of `noise.seed`.
pub fn collect_offline_data(
    sys: &dyn TrueSystem,
    initial_conditions: &[Vec<f64>],
    steps: usize,
    noise: &NoiseSpec,
    group: u32,
    state_box: Option<&BoxSet>,
) -> Result<Vec<Trajectory>> {
    if initial_conditions.is_empty() {
        return Err(Error::config(
            "offline data collection needs at least one initial condition",
        ));
    }
    initial_conditions
        .iter()
        .enumerate()
        .map(|(k, x0)| {
            simulate(
                sys,
                x0,
                &[],
                steps,
                noise,
                stream_id(group, k as u32),
                state_box,
            )
        })
        .collect()
}

fn header(n: usize, m: usize, p: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=m).map(|i| format!("u_{i}")));
    h.extend((1..=p).map(|i| format!("y_{i}")));
    h.extend((1..=n).map(|i| format!("w_{i}")));
    h.extend((1..=p).map(|i| format!("v_{i}")));
    h
}

impl Trajectory {
    /// CSV with one row per time `0..=T`; the last row has empty
    /// input/output/noise cells.
    pub fn write_csv<W: Write>(&self, w: W, input_dim: usize, output_dim: usize) -> Result<()> {
        let n = self.state_dim();
        let mut wr = csv::Writer::from_writer(w);
        let enc = |e: csv::Error| Error::numerical(format!("csv encoding: {e}"));
        wr.write_record(header(n, input_dim, output_dim))
            .map_err(enc)?;
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            if t < self.steps() {
                row.extend(self.inputs[t].iter().map(|v| fmt_f64(*v)));
                row.extend(self.outputs[t].iter().map(|v| fmt_f64(*v)));
                row.extend(self.process_noise[t].iter().map(|v| fmt_f64(*v)));
                row.extend(self.measurement_noise[t].iter().map(|v| fmt_f64(*v)));
            } else {
                row.extend(std::iter::repeat_n(
                    String::new(),
                    input_dim + 2 * output_dim + n,
                ));
            }
            wr.write_record(&row).map_err(enc)?;
        }
        wr.flush().map_err(|e| Error::io("<trajectory>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, origin: &Path) -> Result<Trajectory> {
        let mut rd = csv::Reader::from_reader(r);
        let fmt = |message: String| Error::Format {
            path: origin.into(),
            message,
        };
        let hdr: Vec<String> = rd
            .headers()
            .map_err(|e| fmt(e.to_string()))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let count = |prefix: &str| hdr.iter().filter(|h| h.starts_with(prefix)).count();
        let (n, m, p) = (count("x_"), count("u_"), count("y_"));
        if n == 0 || hdr != header(n, m, p) {
            return Err(fmt(format!("unexpected trajectory header {hdr:?}")));
        }
        let rows: Vec<csv::StringRecord> = rd
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fmt(e.to_string()))?;
        if rows.is_empty() {
            return Err(fmt("trajectory has no rows".into()));
        }
        let steps = rows.len() - 1;
        let mut traj = Trajectory {
            states: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            process_noise: Vec::new(),
            measurement_noise: Vec::new(),
        };
        for (r, rec) in rows.iter().enumerate() {
            let row = r + 1;
            let t = parse_field(origin, row, "t", rec.get(0))?;
            if t != r as f64 {
                return Err(Error::Parse {
                    path: origin.into(),
                    row,
                    column: "t".into(),
                    message: format!("expected time {r}, got {t}"),
                });
            }
            let cols = |start: usize, len: usize| -> Result<Vec<f64>> {
                (start..start + len)
                    .map(|c| parse_field(origin, row, &hdr[c], rec.get(c)))
                    .collect()
            };
            traj.states.push(cols(1, n)?);
            if r < steps {
                traj.inputs.push(cols(1 + n, m)?);
                traj.outputs.push(cols(1 + n + m, p)?);
                traj.process_noise.push(cols(1 + n + m + p, n)?);
                traj.measurement_noise.push(cols(1 + 2 * n + m + p, p)?);
            }
        }
        Ok(traj)
    }

    pub fn save_csv(&self, path: &Path, input_dim: usize, output_dim: usize) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, input_dim, output_dim)?;
        write_atomic(path, &buf)
    }

    pub fn load_csv(path: &Path) -> Result<Trajectory> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Trajectory::read_csv(f, path)
    }
}

impl<S: TrueSystem> TrueSystem for &S {
    fn state_dim(&self) -> usize {
        (*self).state_dim()
    }
    fn input_dim(&self) -> usize {
        (*self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (*self).output_dim()
    }
    fn transition(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        (*self).transition(x, u)
    }
    fn output(&self, x: &[f64], u: &[f64]) -> DVector<f64> {
        (*self).output(x, u)
    }
    fn transition_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        (*self).transition_jacobian(x, u)
    }
    fn output_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        (*self).output_jacobian(x, u)
    }
    fn lipschitz(&self, states: &BoxSet, inputs: &BoxSet) -> Option<(Vec<f64>, Vec<f64>)> {
        (*self).lipschitz(states, inputs)
    }
}
