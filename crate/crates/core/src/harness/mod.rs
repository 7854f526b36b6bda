//! Experiment orchestration behind the `gpmhe` CLI.
//!
//! Every command reads one [`ExperimentConfig`] and writes into
//! `output_dir`:
//!
//! ```text
//! data/offline_<k>.csv          collect
//! data/summary.toml             collect
//! models/<set>.json             train
//! models/<set>_report.toml      train
//! runs/seed_<s>.json            estimate
//! runs/seed_<s>.csv             estimate
//! runs/summary.toml             estimate
//! compare/rmse.csv              compare
//! compare/summary.toml          compare
//! compare/fig1.csv              compare
//! bounds/<est>_summary.toml     bounds
//! bounds/seed_<s>_<est>_*.csv   bounds
//! ```
//!
//! All files are written atomically and depend only on the config and
//! seeds, so repeated runs produce identical bytes.

mod config;
mod record;

pub use config::{
    apply_override, BoundsSection, ExperimentConfig, GpSection, MheSection, ModelSet, NoiseConfig,
    OfflineConfig, OnlineConfig, SystemConfig, MODEL_BASED,
};
pub use record::{rmse, EstimatorRun, RunRecord, StepStats, RECORD_FORMAT, RECORD_VERSION};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    alpha_max, constant_extremal_weights, delta_max, error_bound_trajectory,
    probabilistic_bound_trajectory, write_bound_csv, AlphaMax, BoundInputs, BoundPoint,
    BoundSummary, StabilityConstants, COROLLARY_BRANCHES, THEOREM_BRANCHES,
};
use crate::dynamics::{collect_offline_data, simulate, Trajectory, TrueSystem};
use crate::error::{Error, Result};
use crate::gp::log_marginal_likelihood;
use crate::io::{fmt_f64, write_atomic};
use crate::mhe::{estimator_step, EstimatorState, ExactModel, ModelInterface};
use crate::model::{train_state_space_model, GpStateSpaceModel};
use crate::rng::stream_id;

/// Stream group of the offline trajectories.
pub const OFFLINE_STREAM_GROUP: u32 = 1;
/// Stream group of the online true trajectory.
pub const ONLINE_STREAM_GROUP: u32 = 2;

fn data_path(cfg: &ExperimentConfig, k: usize) -> PathBuf {
    cfg.output_dir.join("data").join(format!("offline_{k}.csv"))
}

fn model_path(cfg: &ExperimentConfig, set: &str) -> PathBuf {
    cfg.output_dir.join("models").join(format!("{set}.json"))
}

fn run_path(cfg: &ExperimentConfig, seed: u64, ext: &str) -> PathBuf {
    cfg.output_dir
        .join("runs")
        .join(format!("seed_{seed}.{ext}"))
}

/// GP model sets among the configured estimators.
pub fn gp_estimators(cfg: &ExperimentConfig) -> Vec<String> {
    cfg.estimators
        .iter()
        .filter(|e| *e != MODEL_BASED)
        .cloned()
        .collect()
}

/// Simulates every offline initial condition.
pub fn offline_trajectories(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    let state_box = cfg.mhe_config()?.state_box;
    let inputs = vec![cfg.online.input.clone(); cfg.offline.steps];
    if cfg.system.input_dim() > 0 {
        return cfg
            .offline
            .initial_conditions
            .iter()
            .enumerate()
            .map(|(k, ic)| {
                simulate(
                    &cfg.system,
                    ic,
                    &inputs,
                    cfg.offline.steps,
                    &cfg.offline_noise(),
                    stream_id(OFFLINE_STREAM_GROUP, k as u32),
                    Some(&state_box),
                )
            })
            .collect();
    }
    collect_offline_data(
        &cfg.system,
        &cfg.offline.initial_conditions,
        cfg.offline.steps,
        &cfg.offline_noise(),
        OFFLINE_STREAM_GROUP,
        Some(&state_box),
    )
}

/// `collect`: one CSV per offline initial condition.
pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let trajs = offline_trajectories(cfg)?;
    let (m, p) = (cfg.system.input_dim(), cfg.system.output_dim());
    let mut written = Vec::new();
    for (k, t) in trajs.iter().enumerate() {
        let path = data_path(cfg, k);
        t.save_csv(&path, m, p)?;
        written.push(path);
    }
    let state_box = cfg.mhe_config()?.state_box;
    let summary = CollectSummary {
        seed: cfg.offline.seed,
        steps: cfg.offline.steps,
        trajectories: trajs
            .iter()
            .zip(&cfg.offline.initial_conditions)
            .enumerate()
            .map(|(k, (t, ic))| CollectEntry {
                file: format!("offline_{k}.csv"),
                initial_condition: ic.clone(),
                rows: t.states.len(),
                states_outside_box: t
                    .states
                    .iter()
                    .filter(|x| !state_box.contains(x, 0.0))
                    .count(),
            })
            .collect(),
    };
    let path = cfg.output_dir.join("data").join("summary.toml");
    write_atomic(&path, encode_toml(&summary)?.as_bytes())?;
    written.push(path);
    info!("collected {} offline trajectories", trajs.len());
    Ok(written)
}

#[derive(Serialize)]
struct CollectEntry {
    file: String,
    initial_condition: Vec<f64>,
    rows: usize,
    states_outside_box: usize,
}

#[derive(Serialize)]
struct CollectSummary {
    seed: u64,
    steps: usize,
    trajectories: Vec<CollectEntry>,
}

#[derive(Serialize)]
struct EstimateEntry {
    seed: u64,
    estimator: String,
    rmse_window: f64,
    rmse_full: f64,
    in_box: bool,
    unconverged_steps: usize,
}

#[derive(Serialize)]
struct EstimateSummary {
    rmse_window: (usize, usize),
    runs: Vec<EstimateEntry>,
}

fn encode_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::numerical(format!("cannot encode summary: {e}")))
}

/// Trains the model of set `name` from in-memory trajectories.
pub fn train_set(
    cfg: &ExperimentConfig,
    name: &str,
    all: &[Trajectory],
) -> Result<GpStateSpaceModel> {
    let set = cfg
        .offline
        .sets
        .get(name)
        .ok_or_else(|| Error::config(format!("unknown model set '{name}'")))?;
    let trajs: Vec<Trajectory> = set.trajectories.iter().map(|&k| all[k].clone()).collect();
    train_state_space_model(
        &trajs,
        cfg.gp.q0.clone(),
        cfg.gp.r0.clone(),
        &cfg.gp.optimizer,
    )
}

#[derive(Serialize)]
struct ComponentReport {
    component: String,
    samples: usize,
    log_marginal_likelihood: f64,
    sigma_f: f64,
    lengthscales: Vec<f64>,
    sigma_eps: f64,
    jitter: f64,
}

#[derive(Serialize)]
struct TrainingReport {
    set: String,
    trajectories: Vec<usize>,
    components: Vec<ComponentReport>,
}

fn training_report(
    cfg: &ExperimentConfig,
    name: &str,
    model: &GpStateSpaceModel,
) -> Result<String> {
    let mut components = Vec::new();
    let named = model
        .state_gps()
        .iter()
        .enumerate()
        .map(|(i, g)| (format!("x{}", i + 1), g))
        .chain(
            model
                .output_gps()
                .iter()
                .enumerate()
                .map(|(j, g)| (format!("y{}", j + 1), g)),
        );
    for (component, gp) in named {
        let h = gp.hyperparameters();
        components.push(ComponentReport {
            component,
            samples: gp.dataset().len(),
            log_marginal_likelihood: log_marginal_likelihood(gp.dataset(), h)?.0,
            sigma_f: h.sigma_f,
            lengthscales: h.lengthscales.clone(),
            sigma_eps: h.sigma_eps,
            jitter: gp.jitter(),
        });
    }
    let report = TrainingReport {
        set: name.to_string(),
        trajectories: cfg.offline.sets[name].trajectories.clone(),
        components,
    };
    toml::to_string(&report)
        .map_err(|e| Error::numerical(format!("cannot encode training report: {e}")))
}

/// `train`: fits one model per GP estimator from the collected CSVs.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let all: Vec<Trajectory> = (0..cfg.offline.initial_conditions.len())
        .map(|k| Trajectory::load_csv(&data_path(cfg, k)))
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for name in gp_estimators(cfg) {
        let model = train_set(cfg, &name, &all)?;
        let path = model_path(cfg, &name);
        model.save(&path)?;
        let report = cfg
            .output_dir
            .join("models")
            .join(format!("{name}_report.toml"));
        write_atomic(&report, training_report(cfg, &name, &model)?.as_bytes())?;
        info!("trained model set {name}");
        written.push(path);
        written.push(report);
    }
    Ok(written)
}

pub fn load_models(cfg: &ExperimentConfig) -> Result<BTreeMap<String, GpStateSpaceModel>> {
    gp_estimators(cfg)
        .into_iter()
        .map(|name| {
            let m = GpStateSpaceModel::load(&model_path(cfg, &name))?;
            Ok((name, m))
        })
        .collect()
}

/// The online true trajectory of `seed`, shared by every estimator.
pub fn online_truth(cfg: &ExperimentConfig, seed: u64) -> Result<Trajectory> {
    let inputs = vec![cfg.online.input.clone(); cfg.online.steps];
    simulate(
        &cfg.system,
        &cfg.online.initial_state,
        &inputs,
        cfg.online.steps,
        &cfg.online_noise(seed),
        stream_id(ONLINE_STREAM_GROUP, 0),
        Some(&cfg.mhe_config()?.state_box),
    )
}

/// Runs one estimator over a recorded trajectory.
pub fn run_estimator<M: ModelInterface + ?Sized>(
    cfg: &ExperimentConfig,
    name: &str,
    model: &M,
    truth: &Trajectory,
) -> Result<EstimatorRun> {
    let mhe = cfg.mhe_config()?;
    let mut state = EstimatorState::new(
        DVector::from_column_slice(&cfg.online.initial_estimate),
        &mhe,
    )?;
    let mut estimates = vec![cfg.online.initial_estimate.clone()];
    let mut steps = Vec::with_capacity(truth.steps());
    for t in 0..truth.steps() {
        let (est, sol) =
            estimator_step(&mut state, &mhe, model, &truth.inputs[t], &truth.outputs[t])?;
        estimates.push(est.iter().copied().collect());
        steps.push(StepStats {
            t: t + 1,
            cost: sol.cost,
            iterations: sol.iterations,
            converged: sol.converged,
            projected_gradient: sol.projected_gradient,
        });
    }
    let in_box = estimates
        .iter()
        .all(|x| x.iter().all(|v| v.is_finite()) && mhe.state_box.contains(x, 1e-9));
    let (from, to) = cfg.online.rmse_window;
    Ok(EstimatorRun {
        name: name.to_string(),
        label: cfg.label(name),
        rmse_window: rmse(&truth.states, &estimates, from, to),
        rmse_full: rmse(&truth.states, &estimates, 0, truth.steps()),
        estimates,
        steps,
        in_box,
    })
}

/// Simulates seed `seed` and runs every configured estimator on it.
pub fn run_seed(
    cfg: &ExperimentConfig,
    overrides: &[String],
    seed: u64,
    models: &BTreeMap<String, GpStateSpaceModel>,
) -> Result<RunRecord> {
    let truth = online_truth(cfg, seed)?;
    let exact = ExactModel::new(cfg.system.clone(), cfg.gp.q0.clone(), cfg.gp.r0.clone())?;
    let mut estimators = Vec::new();
    for name in &cfg.estimators {
        let run = if name == MODEL_BASED {
            run_estimator(cfg, name, &exact, &truth)?
        } else {
            let model = models
                .get(name)
                .ok_or_else(|| Error::config(format!("no trained model for estimator '{name}'")))?;
            run_estimator(cfg, name, model, &truth)?
        };
        if !run.in_box {
            warn!("seed {seed}: estimator {name} left the state box");
        }
        estimators.push(run);
    }
    Ok(RunRecord {
        format: RECORD_FORMAT.into(),
        version: RECORD_VERSION,
        config: cfg.clone(),
        overrides: overrides.to_vec(),
        seed,
        truth,
        estimators,
    })
}

/// Runs every seed in parallel; the result is in seed order.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    overrides: &[String],
    models: &BTreeMap<String, GpStateSpaceModel>,
) -> Result<Vec<RunRecord>> {
    cfg.seeds
        .par_iter()
        .map(|&s| run_seed(cfg, overrides, s, models))
        .collect()
}

fn trajectory_csv(record: &RunRecord) -> String {
    let n = record.truth.state_dim();
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    for e in &record.estimators {
        for i in 1..=n {
            let _ = write!(out, ",{}_x{i}", e.name);
        }
    }
    out.push('\n');
    for t in 0..record.truth.states.len() {
        out.push_str(&t.to_string());
        for v in record.truth.states[t]
            .iter()
            .chain(record.estimators.iter().flat_map(|e| &e.estimates[t]))
        {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// `estimate`: one run record and trajectory CSV per seed.
pub fn cmd_estimate(cfg: &ExperimentConfig, overrides: &[String]) -> Result<Vec<PathBuf>> {
    let models = load_models(cfg)?;
    let records = run_seeds(cfg, overrides, &models)?;
    let mut written = Vec::new();
    for r in &records {
        let json = run_path(cfg, r.seed, "json");
        r.save(&json)?;
        let csv = run_path(cfg, r.seed, "csv");
        write_atomic(&csv, trajectory_csv(r).as_bytes())?;
        written.push(json);
        written.push(csv);
    }
    let summary = EstimateSummary {
        rmse_window: cfg.online.rmse_window,
        runs: records
            .iter()
            .flat_map(|r| {
                r.estimators.iter().map(|e| EstimateEntry {
                    seed: r.seed,
                    estimator: e.name.clone(),
                    rmse_window: e.rmse_window,
                    rmse_full: e.rmse_full,
                    in_box: e.in_box,
                    unconverged_steps: e.steps.iter().filter(|s| !s.converged).count(),
                })
            })
            .collect(),
    };
    let path = cfg.output_dir.join("runs").join("summary.toml");
    write_atomic(&path, encode_toml(&summary)?.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorStats {
    pub estimator: String,
    pub label: String,
    pub runs: usize,
    pub mean_rmse_window: f64,
    pub std_rmse_window: f64,
    pub mean_rmse_full: f64,
    pub std_rmse_full: f64,
    pub all_in_box: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rmse_window: (usize, usize),
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorStats>,
}

impl Comparison {
    pub fn stats(&self, estimator: &str) -> Option<&EstimatorStats> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Monte-Carlo statistics over run records of equal length.
pub fn compare_records(records: &[RunRecord]) -> Result<Comparison> {
    let first = records
        .first()
        .ok_or_else(|| Error::contract("compare needs at least one run"))?;
    let len = first.truth.states.len();
    let names: Vec<&str> = first.estimators.iter().map(|e| e.name.as_str()).collect();
    for r in records {
        let same_names = r
            .estimators
            .iter()
            .map(|e| e.name.as_str())
            .eq(names.iter().copied());
        if r.truth.states.len() != len || !same_names {
            return Err(Error::contract(format!(
                "run for seed {} does not match the first run's length or estimators",
                r.seed
            )));
        }
    }
    let estimators = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let w: Vec<f64> = records
                .iter()
                .map(|r| r.estimators[k].rmse_window)
                .collect();
            let f: Vec<f64> = records.iter().map(|r| r.estimators[k].rmse_full).collect();
            let (mw, sw) = mean_std(&w);
            let (mf, sf) = mean_std(&f);
            EstimatorStats {
                estimator: name.to_string(),
                label: first.estimators[k].label.clone(),
                runs: records.len(),
                mean_rmse_window: mw,
                std_rmse_window: sw,
                mean_rmse_full: mf,
                std_rmse_full: sf,
                all_in_box: records.iter().all(|r| r.estimators[k].in_box),
            }
        })
        .collect();
    Ok(Comparison {
        rmse_window: first.config.online.rmse_window,
        seeds: records.iter().map(|r| r.seed).collect(),
        estimators,
    })
}

fn rmse_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("seed,estimator,rmse_window,rmse_full\n");
    for r in records {
        for e in &r.estimators {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.seed,
                e.name,
                fmt_f64(e.rmse_window),
                fmt_f64(e.rmse_full)
            );
        }
    }
    out
}

/// One row per `(t, state)` with a column per series.
pub fn figure_csv(record: &RunRecord) -> String {
    let mut out = String::from("t,state,True");
    for e in &record.estimators {
        out.push(',');
        out.push_str(&e.label);
    }
    out.push('\n');
    for (t, x) in record.truth.states.iter().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            let _ = write!(out, "{t},x{},{}", i + 1, fmt_f64(*xi));
            for e in &record.estimators {
                out.push(',');
                out.push_str(&fmt_f64(e.estimates[t][i]));
            }
            out.push('\n');
        }
    }
    out
}

fn load_runs(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.seeds
        .iter()
        .map(|&s| RunRecord::load(&run_path(cfg, s, "json")))
        .collect()
}

/// `compare`: RMSE table, Monte-Carlo summary and the figure CSV of the
/// first seed.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let records = load_runs(cfg)?;
    let cmp = compare_records(&records)?;
    let dir = cfg.output_dir.join("compare");
    let rmse_path = dir.join("rmse.csv");
    write_atomic(&rmse_path, rmse_csv(&records).as_bytes())?;
    let summary = dir.join("summary.toml");
    let text = toml::to_string(&cmp)
        .map_err(|e| Error::numerical(format!("cannot encode summary: {e}")))?;
    write_atomic(&summary, text.as_bytes())?;
    let fig = dir.join("fig1.csv");
    write_atomic(&fig, figure_csv(&records[0]).as_bytes())?;
    for s in &cmp.estimators {
        info!(
            "{}: RMSE[{}..{}] = {:.4e} ± {:.4e}",
            s.estimator,
            cmp.rmse_window.0,
            cmp.rmse_window.1,
            s.mean_rmse_window,
            s.std_rmse_window
        );
    }
    Ok(vec![rmse_path, summary, fig])
}

/// Bound constants of one estimator.
pub struct EstimatorBounds {
    pub constants: StabilityConstants,
    pub probabilistic: Option<crate::bounds::ProbBoundResult>,
}

/// Stability constants for `estimator`: `α = 0` for the exact model, grid
/// maxima otherwise.
pub fn estimator_bounds(
    cfg: &ExperimentConfig,
    estimator: &str,
    model: Option<&GpStateSpaceModel>,
) -> Result<EstimatorBounds> {
    let x_box = cfg.mhe_config()?.state_box;
    let u_box = cfg.input_box()?;
    let det = cfg.bounds.detectability.clone();
    match (estimator, model) {
        (MODEL_BASED, _) => Ok(EstimatorBounds {
            constants: StabilityConstants::new(
                det,
                AlphaMax::zero(),
                constant_extremal_weights(&cfg.gp.q0, &cfg.gp.r0)?,
            )?,
            probabilistic: None,
        }),
        (_, Some(m)) => {
            let alpha = alpha_max(m, &cfg.system, &x_box, &u_box, &cfg.bounds.alpha_resolution)?;
            let pb = delta_max(
                m,
                &cfg.bounds.probabilistic,
                &x_box,
                &u_box,
                Some(&cfg.system),
            )?;
            Ok(EstimatorBounds {
                constants: StabilityConstants::new(det, alpha, m.extremal_weights())?,
                probabilistic: Some(pb),
            })
        }
        (name, None) => Err(Error::config(format!(
            "no trained model for estimator '{name}'"
        ))),
    }
}

/// Theorem and (for GP estimators) corollary trajectories of one run.
pub fn run_bounds(
    record: &RunRecord,
    estimator: &str,
    b: &EstimatorBounds,
) -> Result<(Vec<BoundPoint>, Vec<BoundPoint>)> {
    let run = record
        .estimator(estimator)
        .ok_or_else(|| Error::contract(format!("run has no estimator '{estimator}'")))?;
    let inputs = BoundInputs {
        true_states: &record.truth.states,
        estimates: &run.estimates,
        process_noise: &record.truth.process_noise,
        measurement_noise: &record.truth.measurement_noise,
    };
    let theorem = error_bound_trajectory(&inputs, &b.constants)?;
    let corollary = match &b.probabilistic {
        Some(pb) => probabilistic_bound_trajectory(&inputs, &b.constants, pb)?,
        None => Vec::new(),
    };
    Ok((theorem, corollary))
}

fn csv_bytes(points: &[BoundPoint], names: &[&str]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_bound_csv(&mut buf, points, names)?;
    Ok(buf)
}

/// `bounds`: bound trajectories per seed and estimator plus one constants
/// summary per estimator.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let models = load_models(cfg)?;
    let records = load_runs(cfg)?;
    let dir = cfg.output_dir.join("bounds");
    let mut written = Vec::new();
    for name in &cfg.estimators {
        let b = estimator_bounds(cfg, name, models.get(name))?;
        let mut all_theorem = Vec::new();
        let mut all_corollary = Vec::new();
        for r in &records {
            let (theorem, corollary) = run_bounds(r, name, &b)?;
            let violations = theorem.iter().filter(|p| !p.holds()).count();
            if violations > 0 {
                warn!(
                    "seed {} estimator {name}: {violations} steps exceed the bound; the configured detectability constants may not hold",
                    r.seed
                );
            }
            let path = dir.join(format!("seed_{}_{name}_theorem.csv", r.seed));
            write_atomic(&path, &csv_bytes(&theorem, &THEOREM_BRANCHES)?)?;
            written.push(path);
            if !corollary.is_empty() {
                let path = dir.join(format!("seed_{}_{name}_corollary.csv", r.seed));
                write_atomic(&path, &csv_bytes(&corollary, &COROLLARY_BRANCHES)?)?;
                written.push(path);
            }
            all_theorem.extend(theorem);
            all_corollary.extend(corollary);
        }
        let summary = BoundSummary::new(
            &b.constants,
            cfg.mhe.horizon,
            b.probabilistic.clone(),
            &all_theorem,
            &all_corollary,
        );
        let path = dir.join(format!("{name}_summary.toml"));
        write_atomic(&path, summary.to_toml()?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
