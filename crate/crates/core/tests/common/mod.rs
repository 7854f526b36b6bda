//! Shared fixtures for the integration and acceptance tests.
#![allow(dead_code)]

use gpmhe::gp::{fit, Dataset, Hyperparameters, TrainedGp};
use gpmhe::mhe::{Measurement, MheConfig, SolverOptions};
use gpmhe::model::GpStateSpaceModel;
use gpmhe::BoxSet;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A random scalar estimation problem on a learned 1-state model.
pub struct ScalarInstance {
    pub model: GpStateSpaceModel,
    pub config: MheConfig,
    pub prior: DVector<f64>,
    pub window: Vec<Measurement>,
}

fn scalar_gp(xs: &[f64], f: impl Fn(f64) -> f64, h: &Hyperparameters) -> TrainedGp {
    let ds = Dataset::new(
        xs.iter().map(|&x| vec![x]).collect(),
        xs.iter().map(|&x| f(x)).collect(),
    )
    .unwrap();
    fit(&ds, h).unwrap()
}

pub fn scalar_instance(seed: u64, horizon: usize) -> ScalarInstance {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = rng.gen_range(0.6..0.95);
    let b = rng.gen_range(0.05..0.3);
    let c = rng.gen_range(0.5..1.5);
    let xs: Vec<f64> = (0..9).map(|i| 0.5 * i as f64).collect();
    let hyper = Hyperparameters::new(
        rng.gen_range(1.0..3.0),
        vec![rng.gen_range(0.8..2.0)],
        rng.gen_range(0.01..0.1),
    )
    .unwrap();
    let f = move |x: f64| a * x + b * (x).sin() + 0.2;
    let h = move |x: f64| c * x + 0.1 * x * x;
    let model = GpStateSpaceModel::from_parts(
        vec![scalar_gp(&xs, f, &hyper)],
        vec![scalar_gp(&xs, h, &hyper)],
        0,
        DMatrix::from_element(1, 1, rng.gen_range(0.05..0.5)),
        DMatrix::from_element(1, 1, rng.gen_range(0.05..0.5)),
    )
    .unwrap();
    let config = MheConfig {
        horizon,
        eta: rng.gen_range(0.5..0.95),
        p2: DMatrix::from_element(1, 1, rng.gen_range(0.5..2.0)),
        state_box: BoxSet::new(vec![0.0], vec![4.0]).unwrap(),
        solver: SolverOptions::default(),
    };
    let mut x = rng.gen_range(1.0..3.5);
    let window = (0..horizon)
        .map(|_| {
            let y = h(x) + rng.gen_range(-0.2..0.2);
            x = (f(x) + rng.gen_range(-0.1..0.1)).clamp(0.0, 4.0);
            Measurement::new(vec![], vec![y])
        })
        .collect();
    ScalarInstance {
        model,
        config,
        prior: DVector::from_element(1, rng.gen_range(0.2..3.8)),
        window,
    }
}

/// Mean, and inverse weight `1 / (σ² + base)`, straight from a GP.
fn term(gp: &TrainedGp, base: f64, x: f64) -> (f64, f64) {
    let (m, v) = gp.predict(&[x]).unwrap();
    (m, 1.0 / (v + base))
}

/// Minimum of the scalar window cost over a lattice of `points` states per
/// time step: exhaustive over the box first, then re-latticed `zooms`
/// times on ±1 spacing around the minimizer. The cost is a chain in the
/// window states, so each lattice is minimized exactly by dynamic
/// programming. Returns the minimum and the minimizing sequence.
pub fn lattice_minimum(inst: &ScalarInstance, points: usize, zooms: usize) -> (f64, Vec<f64>) {
    let (lo, hi) = (
        inst.config.state_box.lower[0],
        inst.config.state_box.upper[0],
    );
    let m = inst.window.len();
    let eta = inst.config.eta;
    let p2 = inst.config.p2[(0, 0)];
    let fgp = &inst.model.state_gps()[0];
    let hgp = &inst.model.output_gps()[0];
    let (q0, r0) = (inst.model.q0()[(0, 0)], inst.model.r0()[(0, 0)]);
    let axis = |a: f64, b: f64| -> Vec<f64> {
        (0..points)
            .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
            .collect()
    };

    let mut grids: Vec<Vec<f64>> = vec![axis(lo, hi); m + 1];
    let mut best = (f64::INFINITY, Vec::new());
    for level in 0..=zooms {
        let prior_term = |x: f64| 2.0 * eta.powi(m as i32) * p2 * (x - inst.prior[0]).powi(2);
        let mut value: Vec<f64> = grids[0].iter().map(|&x| prior_term(x)).collect();
        let mut parent: Vec<Vec<usize>> = Vec::with_capacity(m);
        for k in 0..m {
            let coef = 2.0 * eta.powi((m - k - 1) as i32);
            let y = inst.window[k].output[0];
            let nodes: Vec<(f64, f64, f64, f64)> = grids[k]
                .iter()
                .map(|&x| {
                    let (fm, qi) = term(fgp, q0, x);
                    let (hm, ri) = term(hgp, r0, x);
                    (fm, qi, hm, ri)
                })
                .collect();
            let mut next = vec![f64::INFINITY; grids[k + 1].len()];
            let mut arg = vec![0; grids[k + 1].len()];
            for (j, &xn) in grids[k + 1].iter().enumerate() {
                for (i, &(fm, qi, hm, ri)) in nodes.iter().enumerate() {
                    let c = value[i] + coef * (qi * (xn - fm).powi(2) + ri * (y - hm).powi(2));
                    if c < next[j] {
                        next[j] = c;
                        arg[j] = i;
                    }
                }
            }
            value = next;
            parent.push(arg);
        }
        let (mut j, &min) = value
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let mut path = vec![0.0; m + 1];
        for k in (0..=m).rev() {
            path[k] = grids[k][j];
            if k > 0 {
                j = parent[k - 1][j];
            }
        }
        if min < best.0 {
            best = (min, path.clone());
        }
        if level < zooms {
            grids = grids
                .iter()
                .zip(&path)
                .map(|(g, &c)| {
                    let s = g[1] - g[0];
                    axis((c - s).max(lo), (c + s).min(hi))
                })
                .collect();
        }
    }
    best
}

pub const REACTOR_ICS: [[f64; 2]; 5] = [[3.0, 1.0], [1.2, 4.5], [0.5, 3.5], [1.0, 3.0], [2.0, 4.0]];

pub fn reactor_box() -> BoxSet {
    BoxSet::new(vec![0.1, 0.1], vec![4.5, 4.5]).unwrap()
}

/// Reactor model conditioned on offline data with fixed hyperparameters,
/// skipping the likelihood optimization.
pub fn reactor_model_fixed(sigma_f: f64, lengthscale: f64, sigma_eps: f64) -> GpStateSpaceModel {
    use gpmhe::dynamics::{collect_offline_data, BatchReactor, NoiseSpec};
    use gpmhe::model::regression_datasets;
    let ics: Vec<Vec<f64>> = REACTOR_ICS.iter().map(|x| x.to_vec()).collect();
    let noise = NoiseSpec {
        sigma_w: 0.01,
        sigma_v: 0.1,
        seed: 1000,
    };
    let trajs = collect_offline_data(&BatchReactor::default(), &ics, 30, &noise, 1, None).unwrap();
    let (fs, hs) = regression_datasets(&trajs).unwrap();
    let h = Hyperparameters::new(sigma_f, vec![lengthscale; 2], sigma_eps).unwrap();
    GpStateSpaceModel::from_parts(
        fs.iter().map(|d| fit(d, &h).unwrap()).collect(),
        hs.iter().map(|d| fit(d, &h).unwrap()).collect(),
        0,
        DMatrix::identity(2, 2) * 1000.0,
        DMatrix::identity(1, 1) * 100.0,
    )
    .unwrap()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
