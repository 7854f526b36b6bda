use std::collections::BTreeMap;

use gpmhe::harness::{
    compare_records, offline_trajectories, rmse, run_seed, train_set, ExperimentConfig, RunRecord,
};

fn quick() -> (ExperimentConfig, Vec<String>) {
    let overrides: Vec<String> = [
        "offline.initial_conditions=[[3.0,1.0],[0.5,3.5],[1.0,3.0],[2.0,4.0]]",
        "offline.sets={two={label=\"GP two\",trajectories=[1,2]},four={label=\"GP four\",trajectories=[0,1,2,3]}}",
        "estimators=[\"mb\",\"two\",\"four\"]",
        "gp.optimizer.restarts=2",
        "gp.optimizer.max_iter=60",
        "online.steps=15",
        "online.rmse_window=[5,15]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let cfg = ExperimentConfig::default()
        .with_overrides(&overrides)
        .unwrap();
    (cfg, overrides)
}

fn trained(cfg: &ExperimentConfig) -> BTreeMap<String, gpmhe::model::GpStateSpaceModel> {
    let all = offline_trajectories(cfg).unwrap();
    ["two", "four"]
        .iter()
        .map(|n| (n.to_string(), train_set(cfg, n, &all).unwrap()))
        .collect()
}

#[test]
fn estimators_share_the_true_trajectory_and_record_is_replayable() {
    let (cfg, overrides) = quick();
    let models = trained(&cfg);
    let rec = run_seed(&cfg, &overrides, 5, &models).unwrap();
    assert_eq!(rec.estimators.len(), 3);
    assert_eq!(rec.truth.states.len(), 16);
    let mb = rec.estimator("mb").unwrap();
    let gp = rec.estimator("four").unwrap();
    assert_ne!(mb.estimates, gp.estimates);
    for e in &rec.estimators {
        assert_eq!(e.rmse_window, rmse(&rec.truth.states, &e.estimates, 5, 15));
        assert_eq!(e.rmse_full, rmse(&rec.truth.states, &e.estimates, 0, 15));
        assert_eq!(e.steps.len(), 15);
    }
    assert_eq!(rec.overrides, overrides);

    // the embedded snapshot reproduces the record
    let back = RunRecord::from_json(&rec.to_json().unwrap(), std::path::Path::new("mem")).unwrap();
    assert_eq!(back, rec);
    let again = run_seed(
        &back.config,
        &back.overrides,
        back.seed,
        &trained(&back.config),
    )
    .unwrap();
    assert_eq!(again, rec);
}

#[test]
fn compare_summarizes_and_rejects_mismatched_runs() {
    let (cfg, overrides) = quick();
    let models = trained(&cfg);
    let one = run_seed(&cfg, &overrides, 1, &models).unwrap();
    let table = compare_records(std::slice::from_ref(&one)).unwrap();
    assert_eq!(table.estimators.len(), 3);
    assert!(table
        .estimators
        .iter()
        .all(|e| e.runs == 1 && e.std_rmse_window == 0.0));

    let two = run_seed(&cfg, &overrides, 2, &models).unwrap();
    let table = compare_records(&[one.clone(), two.clone()]).unwrap();
    let mb = &table.estimators[0];
    let (a, b) = (one.estimators[0].rmse_window, two.estimators[0].rmse_window);
    assert!((mb.mean_rmse_window - 0.5 * (a + b)).abs() < 1e-15);
    assert!((mb.std_rmse_window - (a - b).abs() / 2f64.sqrt()).abs() < 1e-12);

    let mut short = two;
    short.truth.states.pop();
    let err = compare_records(&[one, short]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn record_with_foreign_format_is_rejected() {
    let (cfg, overrides) = quick();
    let rec = run_seed(&cfg, &overrides, 0, &trained(&cfg)).unwrap();
    let json = rec.to_json().unwrap().replace("\"gpmhe-run\"", "\"other\"");
    assert!(RunRecord::from_json(&json, std::path::Path::new("x.json")).is_err());
}
