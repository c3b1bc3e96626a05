//! Configuration resolution: per-model defaults, then the flat key = value
//! config file, then command-line flags — later layers override earlier
//! ones. File errors carry the offending line number.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use npl_mmd::{ExperimentConfig, KernelSpec, Model, Objective};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NPL_MMD_OUT_DIR";

/// CLI failure with its process exit code: configuration problems exit 2,
/// runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Map library errors: precondition violations are configuration
    /// mistakes, everything else is a runtime failure.
    pub fn from_core(err: npl_mmd::Error) -> Self {
        match err {
            npl_mmd::Error::InvalidArgument(msg) => {
                CliError::Config(format!("invalid configuration: {msg}"))
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

/// Flags shared by every subcommand. Every config-file key has a flag of
/// the same name; flags take precedence over the file.
#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Flat `key = value` config file ('#' comments allowed).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model preset: gaussian, gandk, toggleswitch, or cauchy-data.
    #[arg(long)]
    pub model: Option<String>,
    /// Number of observations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Contamination level in [0, 1).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Dirichlet-process concentration (0 = Bayesian bootstrap).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Stick-breaking truncation (pseudo-sample size when alpha > 0).
    #[arg(long, visible_alias = "t")]
    pub truncation: Option<usize>,
    /// Number of posterior bootstrap draws.
    #[arg(long)]
    pub b: Option<usize>,
    /// Optimisation steps per draw.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Kernel: 'median-heuristic', 'mixture', or a positive lengthscale.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Master seed; outputs are a pure function of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Simulated batch size per optimisation step (also the resample size).
    #[arg(long)]
    pub batch: Option<usize>,
    /// Objective: 'resample' or 'weighted'.
    #[arg(long)]
    pub objective: Option<String>,
    /// Random-restart candidates scored per draw (0 disables restarts).
    #[arg(long)]
    pub restarts: Option<usize>,
    /// How many scored candidates are optimised fully.
    #[arg(long)]
    pub restart_keep: Option<usize>,
    /// Estimate the model-vs-truth MMD with this many samples per side
    /// (0 disables the estimate).
    #[arg(long)]
    pub model_mmd_samples: Option<usize>,
    /// Label copied into the output files.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Output directory (default: $NPL_MMD_OUT_DIR, else '.').
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

/// Which subcommand is being resolved; bound checks pin their own defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Run,
    Sweep,
    BoundCheck,
}

/// Fully resolved configuration.
#[derive(Debug)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub out_dir: PathBuf,
}

/// One `key = value` line of a config file.
struct FileEntry {
    line: usize,
    key: String,
    value: String,
}

const FILE_KEYS: &[&str] = &[
    "model",
    "n",
    "epsilon",
    "alpha",
    "truncation",
    "b",
    "steps",
    "learning_rate",
    "kernel",
    "seed",
    "threads",
    "batch",
    "objective",
    "restarts",
    "restart_keep",
    "model_mmd_samples",
    "run_id",
    "out_dir",
];

fn parse_config_file(path: &Path) -> Result<Vec<FileEntry>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(CliError::Config(format!(
                "{}:{line}: expected 'key = value', got '{stripped}'",
                path.display()
            )));
        };
        // Single-letter uppercase shorthands for the two conventional names.
        let key = match key.trim() {
            "T" => "truncation",
            "B" => "b",
            other => other,
        }
        .to_string();
        if !FILE_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!(
                "{}:{line}: unknown key '{key}'",
                path.display()
            )));
        }
        entries.push(FileEntry {
            line,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

fn file_value<'a>(entries: &'a [FileEntry], key: &str) -> Option<&'a str> {
    // Last occurrence wins, mirroring flag-over-file layering within the file.
    entries
        .iter()
        .rev()
        .find(|e| e.key == key)
        .map(|e| e.value.as_str())
}

fn parse_num<T: std::str::FromStr>(kind: &str, key: &str, value: &str) -> Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("invalid {kind} for '{key}': '{value}'"))
}

fn parse_kernel_spec(value: &str) -> Result<KernelSpec, String> {
    match value {
        "median-heuristic" => Ok(KernelSpec::MedianHeuristic),
        "mixture" => Ok(KernelSpec::Mixture),
        other => {
            let l: f64 = other.parse().map_err(|_| {
                format!(
                    "invalid kernel '{other}' (expected 'median-heuristic', 'mixture', \
                     or a positive lengthscale)"
                )
            })?;
            if !(l > 0.0 && l.is_finite()) {
                return Err(format!("kernel lengthscale must be positive, got {l}"));
            }
            Ok(KernelSpec::Lengthscale(l))
        }
    }
}

fn parse_objective(value: &str) -> Result<Objective, String> {
    match value {
        "resample" => Ok(Objective::Resample),
        "weighted" => Ok(Objective::Weighted),
        other => Err(format!(
            "invalid objective '{other}' (expected 'resample' or 'weighted')"
        )),
    }
}

/// Pending restart overrides gathered from file + flags.
#[derive(Default)]
struct RestartOverride {
    r: Option<usize>,
    keep: Option<usize>,
}

impl RestartOverride {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), String> {
        match (self.r, self.keep) {
            (None, None) => Ok(()),
            (Some(0), Some(_)) => Err("restart_keep requires restarts > 0".to_string()),
            (Some(0), None) => {
                cfg.restarts = None;
                Ok(())
            }
            (Some(r), keep) => {
                let default_keep = cfg.restarts.map(|(_, k)| k).unwrap_or(1);
                cfg.restarts = Some((r, keep.unwrap_or(default_keep)));
                Ok(())
            }
            (None, Some(keep)) => match cfg.restarts {
                Some((r, _)) => {
                    cfg.restarts = Some((r, keep));
                    Ok(())
                }
                None => Err(
                    "restart_keep requires restarts (the model has no restart default)".to_string(),
                ),
            },
        }
    }
}

struct Overrides {
    restart: RestartOverride,
    out_dir: Option<PathBuf>,
}

/// Apply one key/value pair onto the config being built.
fn apply_key(
    cfg: &mut ExperimentConfig,
    over: &mut Overrides,
    key: &str,
    value: &str,
) -> Result<(), String> {
    match key {
        // Consumed before defaults are chosen.
        "model" => Ok(()),
        "n" => {
            cfg.n = parse_num("integer", key, value)?;
            Ok(())
        }
        "epsilon" => {
            cfg.epsilon = parse_num("number", key, value)?;
            Ok(())
        }
        "alpha" => {
            cfg.alpha = parse_num("number", key, value)?;
            Ok(())
        }
        "truncation" => {
            cfg.truncation = parse_num("integer", key, value)?;
            Ok(())
        }
        "b" => {
            cfg.b = parse_num("integer", key, value)?;
            Ok(())
        }
        "steps" => {
            cfg.steps = parse_num("integer", key, value)?;
            Ok(())
        }
        "learning_rate" => {
            cfg.learning_rate = parse_num("number", key, value)?;
            Ok(())
        }
        "kernel" => {
            cfg.kernel = parse_kernel_spec(value)?;
            Ok(())
        }
        "seed" => {
            cfg.master_seed = parse_num("integer", key, value)?;
            Ok(())
        }
        "threads" => {
            cfg.workers = parse_num("integer", key, value)?;
            Ok(())
        }
        "batch" => {
            let batch: usize = parse_num("integer", key, value)?;
            cfg.n_per_step = Some(batch);
            cfg.m_per_step = Some(batch);
            Ok(())
        }
        "objective" => {
            cfg.objective = parse_objective(value)?;
            Ok(())
        }
        "restarts" => {
            over.restart.r = Some(parse_num("integer", key, value)?);
            Ok(())
        }
        "restart_keep" => {
            over.restart.keep = Some(parse_num("integer", key, value)?);
            Ok(())
        }
        "model_mmd_samples" => {
            let s: usize = parse_num("integer", key, value)?;
            cfg.model_mmd_samples = if s == 0 { None } else { Some(s) };
            Ok(())
        }
        "run_id" => {
            cfg.run_id = value.to_string();
            Ok(())
        }
        "out_dir" => {
            over.out_dir = Some(PathBuf::from(value));
            Ok(())
        }
        other => Err(format!("unknown key '{other}'")),
    }
}

/// Resolve layered configuration into a runnable experiment plus output
/// directory.
pub fn resolve(args: &CommonArgs, kind: CommandKind) -> Result<Resolved, CliError> {
    let entries = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => Vec::new(),
    };

    let model_name = args
        .model
        .clone()
        .or_else(|| file_value(&entries, "model").map(str::to_string))
        .or_else(|| match kind {
            CommandKind::BoundCheck => Some("gandk".to_string()),
            _ => None,
        })
        .ok_or_else(|| {
            CliError::Config("model must be set via --model or the config file".to_string())
        })?;
    let model = Model::parse(&model_name).map_err(CliError::from_core)?;

    let mut cfg = ExperimentConfig::for_model(model);
    cfg.run_id = model.name().to_string();
    if kind == CommandKind::BoundCheck {
        // Desk-scale bound-check defaults: many independent repetitions, so
        // each bootstrap is kept small.
        cfg.epsilon = 0.0;
        cfg.alpha = 0.0;
        cfg.b = 16;
        cfg.steps = 400;
        cfg.n_per_step = Some(128);
        cfg.m_per_step = Some(128);
        cfg.model_mmd_samples = Some(npl_mmd::DEFAULT_MODEL_MMD_SAMPLES);
    }

    let mut over = Overrides {
        restart: RestartOverride::default(),
        out_dir: None,
    };

    let config_path = args.config.as_deref();
    for entry in &entries {
        apply_key(&mut cfg, &mut over, &entry.key, &entry.value).map_err(|msg| {
            let path = config_path.expect("entries imply a config path");
            CliError::Config(format!("{}:{}: {msg}", path.display(), entry.line))
        })?;
    }

    apply_flags(&mut cfg, &mut over, args).map_err(CliError::Config)?;
    over.restart.apply(&mut cfg).map_err(CliError::Config)?;

    let out_dir = args
        .out_dir
        .clone()
        .or(over.out_dir)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(Resolved {
        experiment: cfg,
        out_dir,
    })
}

fn apply_flags(
    cfg: &mut ExperimentConfig,
    over: &mut Overrides,
    args: &CommonArgs,
) -> Result<(), String> {
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(epsilon) = args.epsilon {
        cfg.epsilon = epsilon;
    }
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(truncation) = args.truncation {
        cfg.truncation = truncation;
    }
    if let Some(b) = args.b {
        cfg.b = b;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(learning_rate) = args.learning_rate {
        cfg.learning_rate = learning_rate;
    }
    if let Some(kernel) = &args.kernel {
        cfg.kernel = parse_kernel_spec(kernel)?;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.workers = threads;
    }
    if let Some(batch) = args.batch {
        cfg.n_per_step = Some(batch);
        cfg.m_per_step = Some(batch);
    }
    if let Some(objective) = &args.objective {
        cfg.objective = parse_objective(objective)?;
    }
    if let Some(r) = args.restarts {
        over.restart.r = Some(r);
    }
    if let Some(keep) = args.restart_keep {
        over.restart.keep = Some(keep);
    }
    if let Some(s) = args.model_mmd_samples {
        cfg.model_mmd_samples = if s == 0 { None } else { Some(s) };
    }
    if let Some(run_id) = &args.run_id {
        cfg.run_id = run_id.clone();
    }
    Ok(())
}

/// Resolved-configuration snapshot written to `config.json`.
pub fn snapshot(resolved: &Resolved) -> serde_json::Value {
    let cfg = &resolved.experiment;
    serde_json::json!({
        "model": cfg.model.name(),
        "n": cfg.n,
        "epsilon": cfg.epsilon,
        "alpha": cfg.alpha,
        "truncation": cfg.truncation,
        "b": cfg.b,
        "steps": cfg.steps,
        "learning_rate": cfg.learning_rate,
        "batch": cfg.n_per_step,
        "objective": match cfg.objective {
            Objective::Resample => "resample",
            Objective::Weighted => "weighted",
        },
        "kernel": cfg.kernel.describe(),
        "seed": cfg.master_seed,
        "threads": cfg.workers,
        "restarts": cfg.restarts.map(|(r, _)| r),
        "restart_keep": cfg.restarts.map(|(_, k)| k),
        "model_mmd_samples": cfg.model_mmd_samples,
        "run_id": cfg.run_id,
        "out_dir": resolved.out_dir.display().to_string(),
    })
}
