use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpmhe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmhe"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run gpmhe")
}

/// A reduced experiment that runs every command in seconds.
const QUICK: &[&str] = &[
    "--set",
    "offline.initial_conditions=[[3.0,1.0],[0.5,3.5],[1.0,3.0]]",
    "--set",
    "offline.sets={small={label=\"GP small\",trajectories=[0,1,2]}}",
    "--estimators",
    "mb,small",
    "--seed",
    "0",
    "--seed",
    "3",
    "--set",
    "gp.optimizer.restarts=2",
    "--set",
    "gp.optimizer.max_iter=60",
    "--set",
    "online.steps=12",
    "--set",
    "online.rmse_window=[2,12]",
    "--set",
    "bounds.alpha_resolution=[9,9]",
    "--set",
    "bounds.probabilistic.grid_resolution=[9,9]",
];

fn run(cmd: &str, out: &Path) -> Output {
    let mut args = vec![cmd, "--out", out.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    let o = gpmhe(&args);
    assert!(
        o.status.success(),
        "{cmd}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for sub in ["data", "runs", "compare", "bounds"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for p in names {
            if p.extension().is_some_and(|e| e == "csv" || e == "toml") {
                files.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files
}

#[test]
fn collect_writes_one_file_per_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpmhe(&["collect", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    for k in 0..5 {
        let text = fs::read_to_string(dir.path().join(format!("data/offline_{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 31);
    }
    assert!(!dir.path().join("data/offline_5.csv").exists());
    assert!(dir.path().join("data/summary.toml").exists());
}

#[test]
fn pipeline_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for cmd in ["collect", "train", "estimate", "compare", "bounds"] {
            run(cmd, dir);
        }
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);

    let fig = fs::read_to_string(a.path().join("compare/fig1.csv")).unwrap();
    assert_eq!(fig.lines().next().unwrap(), "t,state,True,MB MHE,GP small");
    let summary = fs::read_to_string(a.path().join("runs/summary.toml")).unwrap();
    assert_eq!(summary.matches("[[runs]]").count(), 4);
    let theorem = fs::read_to_string(a.path().join("bounds/seed_0_mb_theorem.csv")).unwrap();
    assert_eq!(theorem.lines().count(), 1 + 13);
    assert!(theorem.lines().skip(1).all(|l| !l.ends_with(",unknown")));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let o = gpmhe(&[
        "collect",
        "--out",
        out,
        "--set",
        "offline.initial_conditions=[]",
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let o = gpmhe(&["collect", "--out", out, "--set", "noise.sigma_w=-1.0"]);
    assert_eq!(o.status.code(), Some(2));

    let o = gpmhe(&["collect", "--out", out, "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = gpmhe(&["estimate", "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("models/gp5.json"));

    let o = gpmhe(&[
        "collect",
        "--config",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn corrupted_training_data_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(gpmhe(&["collect", "--out", out]).status.success());
    let path = dir.path().join("data/offline_2.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[4].split(',').map(str::to_string).collect();
    cells[1] = "oops".into();
    lines[4] = cells.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();

    let o = gpmhe(&["train", "--out", out]);
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("offline_2.csv"), "{err}");
    assert!(err.contains("row 4") && err.contains("column"), "{err}");
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["batch_reactor.toml", "batch_reactor_tight.toml"] {
        let cfg = gpmhe::harness::ExperimentConfig::load(&dir.join(name), &[]).unwrap();
        assert_eq!(cfg.seeds.len(), 20);
    }
    let default = gpmhe::harness::ExperimentConfig::default();
    let shipped =
        gpmhe::harness::ExperimentConfig::load(&dir.join("batch_reactor.toml"), &[]).unwrap();
    assert_eq!(shipped, default);
}
