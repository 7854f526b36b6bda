use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gpmhe::harness::{self, ExperimentConfig};
use gpmhe::Result;

/// GP-based moving horizon estimation experiments.
#[derive(Parser)]
#[command(name = "gpmhe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML). Built-in batch reactor defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Scenario seed; repeat for several. Replaces `seeds` from the config.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,

    /// Output directory; replaces `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated estimators, e.g. `mb,gp5`.
    #[arg(long, global = true, value_delimiter = ',')]
    estimators: Vec<String>,

    /// Override a config key, e.g. `--set mhe.horizon=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate the offline trajectories.
    Collect,
    /// Fit the GP models from collected data.
    Train,
    /// Run the estimators on seeded online scenarios.
    Estimate,
    /// Summarize RMSE over seeds and write the figure CSV.
    Compare,
    /// Evaluate the error bounds on recorded runs.
    Bounds,
    /// collect, train, estimate, compare and bounds in sequence.
    All,
}

fn overrides(cli: &Cli) -> Vec<String> {
    let mut all = cli.overrides.clone();
    if !cli.seeds.is_empty() {
        let list: Vec<String> = cli.seeds.iter().map(u64::to_string).collect();
        all.push(format!("seeds=[{}]", list.join(",")));
    }
    if let Some(out) = &cli.out {
        all.push(format!("output_dir={:?}", out.to_string_lossy()));
    }
    if !cli.estimators.is_empty() {
        let list: Vec<String> = cli.estimators.iter().map(|e| format!("{e:?}")).collect();
        all.push(format!("estimators=[{}]", list.join(",")));
    }
    all
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let ov = overrides(cli);
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &ov)?,
        None => ExperimentConfig::default().with_overrides(&ov)?,
    };
    let mut written = Vec::new();
    let steps: &[Command] = match cli.command {
        Command::All => &[
            Command::Collect,
            Command::Train,
            Command::Estimate,
            Command::Compare,
            Command::Bounds,
        ],
        ref c => std::slice::from_ref(c),
    };
    for step in steps {
        written.extend(match step {
            Command::Collect => harness::cmd_collect(&cfg)?,
            Command::Train => harness::cmd_train(&cfg)?,
            Command::Estimate => harness::cmd_estimate(&cfg, &ov)?,
            Command::Compare => harness::cmd_compare(&cfg)?,
            Command::Bounds => harness::cmd_bounds(&cfg)?,
            Command::All => unreachable!(),
        });
    }
    Ok(written)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
