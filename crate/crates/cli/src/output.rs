//! Stable artifact writers: fixed column orders, 17-significant-digit
//! floats, newline-terminated files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use npl_mmd::{posterior_summary, BoundCheckRow, ExperimentResult, PosteriorSample, SweepRow};

use crate::config::CliError;

/// Format a float with 17 significant digits (round-trip exact for f64).
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// `posterior.csv`: one row per bootstrap draw with columns
/// `b, theta_0..theta_{p-1}, loss, seed`. Failed draws keep their row with
/// NaN parameter and loss entries.
pub fn write_posterior_csv(
    path: &Path,
    sample: &PosteriorSample,
    param_dim: usize,
) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        write!(w, "b")?;
        for q in 0..param_dim {
            write!(w, ",theta_{q}")?;
        }
        writeln!(w, ",loss,seed")?;
        for (j, draw) in sample.draws.iter().enumerate() {
            write!(w, "{j}")?;
            for q in 0..param_dim {
                let v = draw.theta.get(q).copied().unwrap_or(f64::NAN);
                write!(w, ",{}", fmt_float(v))?;
            }
            writeln!(w, ",{},{}", fmt_float(draw.loss), draw.seed)?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// `summary.json`: posterior summary statistics merged with the experiment
/// result into one flat object.
pub fn write_summary_json(
    path: &Path,
    result: &ExperimentResult,
    sample: &PosteriorSample,
) -> Result<(), CliError> {
    let summary = posterior_summary(sample).map_err(CliError::from_core)?;
    let mut obj = match serde_json::to_value(result) {
        Ok(serde_json::Value::Object(map)) => map,
        _ => return Err(CliError::Runtime("summary serialisation failed".into())),
    };
    match serde_json::to_value(&summary) {
        Ok(serde_json::Value::Object(map)) => obj.extend(map),
        _ => return Err(CliError::Runtime("summary serialisation failed".into())),
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))
        .map_err(|e| CliError::Runtime(format!("summary serialisation failed: {e}")))?;
    write_text(path, &format!("{text}\n"))
}

/// `config.json`: the resolved configuration snapshot (plus any
/// command-specific fields already merged in by the caller).
pub fn write_config_json(path: &Path, snapshot: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(snapshot)
        .map_err(|e| CliError::Runtime(format!("config serialisation failed: {e}")))?;
    write_text(path, &format!("{text}\n"))
}

/// `sweep.csv`: columns `parameter, value, nmse`, one row per grid value.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut text = String::from("parameter,value,nmse\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.parameter,
            fmt_float(row.value),
            fmt_float(row.nmse)
        ));
    }
    write_text(path, &text)
}

/// `bound.csv`: columns `n, mmd_estimate, bound_2_over_sqrt_n`.
pub fn write_bound_csv(path: &Path, rows: &[BoundCheckRow]) -> Result<(), CliError> {
    let mut text = String::from("n,mmd_estimate,bound_2_over_sqrt_n\n");
    for row in rows {
        text.push_str(&format!(
            "{},{},{}\n",
            row.n,
            fmt_float(row.mmd_estimate),
            fmt_float(row.bound_2_over_sqrt_n)
        ));
    }
    write_text(path, &text)
}
