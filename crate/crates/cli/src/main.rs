//! splinelab: build spline bases on interval partitions, measure Gram and
//! projector norms, and write replayable reports.
//!
//! Subcommands:
//! - `run CONFIG` executes a config, writing report.json and report.csv
//! - `replay REPORT` re-runs a stored report and compares rows bitwise
//! - `sweep CONFIG --set PATH=V1,V2 ...` runs a grid of patched configs
//! - `plotdata REPORT --x COL --y COL` prints x/y series as JSON
//!
//! Exit codes: 0 success, 1 broken invariant or replay mismatch, 2 bad
//! usage or config.

mod config;
mod error;
mod report;
mod runner;
mod sweep;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;
use report::{row_diff, write_combined_csv, Report};
use runner::{collect_warnings, run, RunOptions};

#[derive(Parser)]
#[command(
    name = "splinelab",
    version,
    about = "Spline basis and projector experiment harness"
)]
struct Cli {
    /// Output directory; wins over the config's out field, $SPLINELAB_OUT
    /// and ./out
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 = automatic
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Replace the config seed before running
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Treat warnings as failures
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment config
    Run {
        /// Path to the config JSON
        config: PathBuf,
    },
    /// Re-run a stored report and compare every numeric column
    Replay {
        /// Path to a report.json written by run or sweep
        report: PathBuf,
        /// Compare only this row
        #[arg(long)]
        row: Option<usize>,
    },
    /// Run the cartesian product of config patches
    Sweep {
        /// Path to the base config JSON
        config: PathBuf,
        /// Axis PATH=V1,V2 with dot paths into the config, repeatable
        #[arg(long = "set", value_name = "PATH=V1,V2")]
        set: Vec<String>,
    },
    /// Print plottable x/y series from a report as JSON
    Plotdata {
        /// Path to a report.json
        report: PathBuf,
        /// Column for x values
        #[arg(long, default_value = "mesh_mu")]
        x: String,
        /// Column for y values
        #[arg(long, default_value = "g_inv_norm")]
        y: String,
        /// Column whose values split the rows into series
        #[arg(long)]
        group: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Print a line to stdout, swallowing broken pipes so `splinelab ... | head`
/// exits quietly instead of panicking.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let opts = RunOptions {
        threads: cli.threads,
        seed_override: cli.seed_override,
        strict: cli.strict,
    };
    match cli.command {
        Command::Run { config } => cmd_run(&config, cli.out, &opts),
        Command::Replay { report, row } => cmd_replay(&report, row, &opts),
        Command::Sweep { config, set } => cmd_sweep(&config, &set, cli.out, &opts),
        Command::Plotdata { report, x, y, group } => cmd_plotdata(&report, &x, &y, group.as_deref()),
    }
}

/// Output directory precedence: --out flag, then the config's own `out`
/// field, then $SPLINELAB_OUT, then ./out.
fn resolve_out(flag: Option<PathBuf>, config_out: Option<&Path>) -> PathBuf {
    flag.or_else(|| config_out.map(Path::to_path_buf))
        .or_else(|| std::env::var_os("SPLINELAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn finish_warnings(report: &Report, strict: bool) -> Result<(), CliError> {
    let warnings = collect_warnings(report);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if strict && !warnings.is_empty() {
        return Err(CliError::Strict(format!(
            "{} warning(s) escalated to failure",
            warnings.len()
        )));
    }
    Ok(())
}

fn cmd_run(config: &Path, out_flag: Option<PathBuf>, opts: &RunOptions) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let out_dir = resolve_out(out_flag, cfg.out.as_deref());
    let out_dir = out_dir.as_path();
    let report = run(&cfg, opts)?;
    fs::create_dir_all(out_dir)?;
    let json_path = out_dir.join("report.json");
    let csv_path = out_dir.join("report.csv");
    report.save_json(&json_path)?;
    report.save_csv(&csv_path)?;
    for jr in &report.rows {
        emit(&format!(
            "row {}: {} {}",
            jr.row.row,
            jr.row.partition,
            row_digest(&jr.row)
        ));
    }
    emit(&format!(
        "wrote {} and {} ({} rows, config {})",
        json_path.display(),
        csv_path.display(),
        report.rows.len(),
        &report.config_hash[..12]
    ));
    finish_warnings(&report, opts.strict)
}

/// The populated metric columns of a row, compactly, for terminal output.
fn row_digest(row: &report::Row) -> String {
    let mut parts = vec![format!("dim={}", row.dim)];
    let mut push = |name: &str, v: Option<f64>| {
        if let Some(v) = v {
            parts.push(format!("{name}={v:.6}"));
        }
    };
    push("g_inv_norm", row.g_inv_norm);
    push("gp_inv_norm", row.gp_inv_norm);
    push("demko_q", row.demko_q);
    push("x_norm", row.x_norm);
    push("op_norm", row.op_norm);
    push("theta", row.theta_proxy);
    push("sup_diff", row.sup_diff);
    if let Some(c) = row.contraction {
        parts.push(format!("contraction={c}"));
    }
    parts.join(" ")
}

fn cmd_replay(path: &Path, row: Option<usize>, opts: &RunOptions) -> Result<(), CliError> {
    let stored = Report::load(path)?;
    if stored.rows.is_empty() {
        return Err(CliError::Config("report has no rows".to_string()));
    }
    let targets: Vec<usize> = match row {
        Some(r) if r >= stored.rows.len() => {
            return Err(CliError::Config(format!(
                "row {r} out of range, report has {} rows",
                stored.rows.len()
            )));
        }
        Some(r) => vec![r],
        None => (0..stored.rows.len()).collect(),
    };

    // every checked row must agree with the embedded config before we trust
    // the report enough to re-run it
    for &r in &targets {
        let jr = &stored.rows[r];
        let mut effective = stored.config.clone();
        effective.seed = jr.row.seed;
        let recomputed = effective.hash();
        if recomputed != jr.row.config_hash || jr.row.config_hash != stored.config_hash {
            return Err(CliError::HashMismatch {
                stored: jr.row.config_hash.clone(),
                recomputed,
            });
        }
    }

    // the stored config already carries the effective seed; an override here
    // would only manufacture mismatches
    let rerun_opts = RunOptions {
        threads: opts.threads,
        seed_override: None,
        strict: false,
    };
    let fresh = run(&stored.config, &rerun_opts)?;
    if fresh.rows.len() != stored.rows.len() {
        return Err(CliError::ReplayMismatch {
            row: 0,
            fields: format!(
                "row count changed from {} to {}",
                stored.rows.len(),
                fresh.rows.len()
            ),
        });
    }
    for &r in &targets {
        let diff = row_diff(&stored.rows[r].row, &fresh.rows[r].row);
        if !diff.is_empty() {
            return Err(CliError::ReplayMismatch {
                row: r,
                fields: diff.join(", "),
            });
        }
    }
    emit(&format!("replay ok: {} row(s) match", targets.len()));
    Ok(())
}

fn cmd_sweep(
    config: &Path,
    set: &[String],
    out_flag: Option<PathBuf>,
    opts: &RunOptions,
) -> Result<(), CliError> {
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
    let base: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    // the base config's out field steers the whole sweep; per-cell values
    // would scatter the combined CSV
    let base_out = base
        .get("out")
        .and_then(|v| v.as_str())
        .map(PathBuf::from);
    let out_dir = resolve_out(out_flag, base_out.as_deref());
    let out_dir = out_dir.as_path();
    let axes = set
        .iter()
        .map(|s| sweep::parse_axis(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cells = sweep::expand(&base, &axes)?;

    fs::create_dir_all(out_dir)?;
    let mut reports = Vec::with_capacity(cells.len());
    for (i, (label, mut doc)) in cells.into_iter().enumerate() {
        if !label.is_empty() {
            let combined = match doc.get("label").and_then(|l| l.as_str()) {
                Some(existing) if !existing.is_empty() => format!("{existing};{label}"),
                _ => label.clone(),
            };
            sweep::patch(&mut doc, "label", &serde_json::Value::String(combined))?;
        }
        let cell_text =
            serde_json::to_string(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = ExperimentConfig::from_json(&cell_text)?;
        let report = run(&cfg, opts)?;
        let cell_path = out_dir.join(format!("cell_{i:02}.json"));
        report.save_json(&cell_path)?;
        emit(&format!(
            "cell {i} [{label}]: {} rows, config {}",
            report.rows.len(),
            &report.config_hash[..12]
        ));
        reports.push(report);
    }
    let csv_path = out_dir.join("sweep.csv");
    write_combined_csv(&csv_path, &reports)?;
    emit(&format!(
        "wrote {} ({} cells, {} rows)",
        csv_path.display(),
        reports.len(),
        reports.iter().map(|r| r.rows.len()).sum::<usize>()
    ));
    for report in &reports {
        finish_warnings(report, opts.strict)?;
    }
    Ok(())
}

fn cmd_plotdata(path: &Path, x: &str, y: &str, group: Option<&str>) -> Result<(), CliError> {
    let stored = Report::load(path)?;
    let mut series: BTreeMap<String, Vec<serde_json::Value>> = BTreeMap::new();
    for jr in &stored.rows {
        let map = match serde_json::to_value(&jr.row) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => return Err(CliError::Config("row does not serialize".to_string())),
        };
        let fetch = |field: &str| -> Result<f64, CliError> {
            let v = map.get(field).ok_or_else(|| {
                CliError::Config(format!("no column named {field:?}"))
            })?;
            match v {
                serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| {
                    CliError::Config(format!("column {field:?} is not representable"))
                }),
                serde_json::Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
                serde_json::Value::Null => Err(CliError::Config(format!(
                    "column {field:?} is empty in row {}",
                    jr.row.row
                ))),
                _ => Err(CliError::Config(format!(
                    "column {field:?} is not numeric"
                ))),
            }
        };
        let xv = fetch(x)?;
        let yv = fetch(y)?;
        let key = match group {
            None => String::new(),
            Some(g) => match map.get(g) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => return Err(CliError::Config(format!("no column named {g:?}"))),
            },
        };
        series
            .entry(key)
            .or_default()
            .push(serde_json::json!({ "x": xv, "y": yv }));
    }
    let payload = serde_json::json!({
        "x_field": x,
        "y_field": y,
        "series": series
            .into_iter()
            .map(|(group, points)| serde_json::json!({ "group": group, "points": points }))
            .collect::<Vec<_>>(),
    });
    emit(&serde_json::to_string_pretty(&payload).map_err(|e| CliError::Config(e.to_string()))?);
    Ok(())
}
