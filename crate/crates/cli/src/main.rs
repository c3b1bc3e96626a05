//! Command-line driver for MMD posterior bootstrap experiments.
//!
//! Subcommands: `run` (one experiment → posterior.csv, summary.json,
//! config.json), `sweep` (vary one hyperparameter over a grid → sweep.csv),
//! and `bound-check` (model-vs-truth MMD against the 2/√n curve on clean
//! g-and-k data → bound.csv). Exit codes: 0 success, 1 runtime failure,
//! 2 configuration error.

mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{resolve, snapshot, CliError, CommandKind, CommonArgs};

#[derive(Parser)]
#[command(
    name = "npl-mmd",
    version,
    about = "Robust simulator-based inference via the MMD posterior bootstrap"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; writes posterior.csv, summary.json, config.json.
    Run(RunArgs),
    /// Rerun an experiment with one hyperparameter varied over a grid;
    /// writes sweep.csv and config.json.
    Sweep(SweepArgs),
    /// Estimate the model-vs-truth MMD on clean g-and-k data over a grid of
    /// sample sizes and compare with 2/√n; writes bound.csv and config.json.
    BoundCheck(BoundCheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Hyperparameter to vary: alpha, truncation, or lengthscale.
    #[arg(long)]
    parameter: String,
    /// Comma-separated grid values.
    #[arg(long)]
    grid: String,
}

#[derive(Args)]
struct BoundCheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sample sizes.
    #[arg(long, default_value = "250,500,1000,2000,4000")]
    n_grid: String,
    /// Independent repetitions per sample size.
    #[arg(long, default_value_t = 10)]
    runs: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::BoundCheck(args) => cmd_bound_check(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common, CommandKind::Run)?;
    ensure_out_dir(&resolved.out_dir)?;
    let (result, sample) =
        npl_mmd::run_experiment(&resolved.experiment).map_err(CliError::from_core)?;
    let param_dim = resolved.experiment.model.true_theta().len();

    let posterior_path = resolved.out_dir.join("posterior.csv");
    output::write_posterior_csv(&posterior_path, &sample, param_dim)?;
    let summary_path = resolved.out_dir.join("summary.json");
    output::write_summary_json(&summary_path, &result, &sample)?;
    let config_path = resolved.out_dir.join("config.json");
    output::write_config_json(&config_path, &snapshot(&resolved))?;

    println!(
        "run {}: nmse = {:.6e} ({} draws, {:.1}s)",
        result.run_id, result.nmse, result.b, result.wall_time_seconds
    );
    for path in [&posterior_path, &summary_path, &config_path] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_grid<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(CliError::Config(format!("{what} grid is empty")));
    }
    raw.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<T>()
                .map_err(|_| CliError::Config(format!("invalid {what} grid value '{tok}'")))
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common, CommandKind::Sweep)?;
    let parameter = npl_mmd::SweepParameter::parse(&args.parameter).map_err(CliError::from_core)?;
    let grid: Vec<f64> = parse_grid(&args.grid, "sweep")?;
    ensure_out_dir(&resolved.out_dir)?;

    let rows = npl_mmd::hyperparameter_sweep(parameter, &grid, &resolved.experiment)
        .map_err(CliError::from_core)?;

    let sweep_path = resolved.out_dir.join("sweep.csv");
    output::write_sweep_csv(&sweep_path, &rows)?;
    let mut snap = snapshot(&resolved);
    if let serde_json::Value::Object(map) = &mut snap {
        map.insert("sweep_parameter".into(), parameter.name().into());
        map.insert(
            "sweep_grid".into(),
            serde_json::Value::Array(grid.iter().map(|&v| v.into()).collect()),
        );
    }
    let config_path = resolved.out_dir.join("config.json");
    output::write_config_json(&config_path, &snap)?;

    println!("sweep over {}: {} rows", parameter.name(), rows.len());
    for path in [&sweep_path, &config_path] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_bound_check(args: &BoundCheckArgs) -> Result<(), CliError> {
    let resolved = resolve(&args.common, CommandKind::BoundCheck)?;
    let n_grid: Vec<usize> = parse_grid(&args.n_grid, "sample-size")?;
    if args.runs == 0 {
        return Err(CliError::Config("runs must be ≥ 1".to_string()));
    }
    ensure_out_dir(&resolved.out_dir)?;

    let rows = npl_mmd::bound_check_experiment(&n_grid, args.runs, &resolved.experiment)
        .map_err(CliError::from_core)?;

    let bound_path = resolved.out_dir.join("bound.csv");
    output::write_bound_csv(&bound_path, &rows)?;
    let mut snap = snapshot(&resolved);
    if let serde_json::Value::Object(map) = &mut snap {
        map.insert(
            "n_grid".into(),
            serde_json::Value::Array(n_grid.iter().map(|&n| n.into()).collect()),
        );
        map.insert("runs".into(), args.runs.into());
    }
    let config_path = resolved.out_dir.join("config.json");
    output::write_config_json(&config_path, &snap)?;

    println!(
        "bound check: {} sample sizes, {} runs each",
        rows.len(),
        args.runs
    );
    for path in [&bound_path, &config_path] {
        println!("wrote {}", path.display());
    }
    Ok(())
}
