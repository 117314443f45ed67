//! `bhp-lab`: runs the verification scenarios and writes their reports.
//!
//! Exit status is 0 when every executed row passes, 1 when a row fails or an
//! engine aborts, and 2 on usage or configuration errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use bhp_core::kernel::{lemma24_grid, lemma25_grid, GridCheck};
use bhp_core::scenarios::report::{csv_field, fmt_f64, to_csv, to_json, write_atomic};
use bhp_core::scenarios::{lookup, parse_batch, parse_config, run_scenario, ScenarioConfig};
use bhp_core::scenarios::{ReportRow, CLAIMS, REGISTRY};
use bhp_core::{write_report, Format};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::Value;

const DEFAULT_OUT: &str = "bhp-out";

#[derive(Parser)]
#[command(name = "bhp-lab", version, about = "Numerical checks of uniform boundary Harnack estimates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one registered scenario or a batch file.
    Run(RunArgs),
    /// Print the scenario registry and the claims each scenario checks.
    List,
    /// Run the exhaustive grids for the two scalar inequalities.
    CheckLemmas(LemmaArgs),
    /// Parse and validate a config or batch file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario name, or path to a batch file `{"scenarios": [...]}`.
    target: String,
    /// Overrides for a named scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every scenario run, replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Falls back to the config's `output.dir`, then `bhp-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Run the entries of a batch concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct LemmaArgs {
    /// Largest dimension; the grids run for every d in 2..=dmax.
    #[arg(long, default_value_t = 10)]
    dmax: usize,
    #[arg(long, default_value_t = 100_000)]
    grid24: usize,
    /// Nodes per axis of the square grid.
    #[arg(long, default_value_t = 1000)]
    grid25: usize,
    /// Write `lemmas.csv` here instead of printing to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Marks errors that map to exit status 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = init_workers().and_then(|()| match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::List => list(),
        Cmd::CheckLemmas(a) => check_lemmas(a),
        Cmd::Validate { config } => validate(&config),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.chain().any(|c| c.is::<Usage>() || c.is::<bhp_core::ConfigErrors>());
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}

/// Writes to stdout. A reader that closed the pipe early is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write as _;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

/// Sizes the global rayon pool from `BHP_WORKERS` when set.
fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var("BHP_WORKERS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return usage(format!("BHP_WORKERS must be a positive integer, got `{raw}`")),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Usage(format!("cannot read {}: {e}", path.display())).into())
}

/// Config for a named scenario, with the file's settings if one is given.
fn named_config(name: &str, file: Option<&Path>) -> Result<ScenarioConfig> {
    let mut obj = match file {
        None => serde_json::Map::new(),
        Some(p) => {
            let text = read(p)?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                // Let the parser produce the located syntax error.
                Err(_) => return Ok(parse_config(&text)?),
                Ok(_) => return usage(format!("{}: a scenario config must be a JSON object", p.display())),
            }
        }
    };
    match obj.get("scenario") {
        None => {
            obj.insert("scenario".into(), Value::String(name.into()));
        }
        Some(Value::String(s)) if s == name => {}
        Some(other) => {
            return usage(format!("config names scenario {other}, but `{name}` was requested"));
        }
    }
    Ok(parse_config(&Value::Object(obj).to_string())?)
}

fn run(a: RunArgs) -> Result<bool> {
    let format = a.format.as_deref().map(|f| f.parse::<Format>().map_err(Usage)).transpose()?;
    let (batch, mut cfgs) = if lookup(&a.target).is_some() {
        (false, vec![named_config(&a.target, a.config.as_deref())?])
    } else if Path::new(&a.target).is_file() {
        if a.config.is_some() {
            return usage("--config applies to a named scenario, not to a batch file");
        }
        (true, parse_batch(&read(Path::new(&a.target))?)?)
    } else {
        let names: Vec<_> = REGISTRY.iter().map(|s| s.name).collect();
        return usage(format!(
            "`{}` is neither a scenario nor a batch file; scenarios: {}",
            a.target,
            names.join(", ")
        ));
    };
    if let Some(seed) = a.seed {
        for c in &mut cfgs {
            c.seed = seed;
        }
    }

    let started = Instant::now();
    let exec = |(i, cfg): (usize, &ScenarioConfig)| -> Result<Vec<ReportRow>> {
        let t = Instant::now();
        let mut out = run_scenario(cfg).with_context(|| format!("scenario `{}`", cfg.scenario))?;
        let dir = a.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or(DEFAULT_OUT.into());
        let fmt = format.unwrap_or(cfg.output.format);
        let stem = if batch { format!("{i:03}-{}", cfg.scenario) } else { cfg.scenario.clone() };
        if batch {
            for art in &mut out.artifacts {
                art.file_name = format!("{i:03}-{}", art.file_name);
            }
        }
        let files = write_report(&out.rows, &out.artifacts, &dir, &stem, fmt)
            .with_context(|| format!("writing the report to {}", dir.display()))?;
        eprintln!(
            "{}: {} rows in {:.2} s, wrote {}",
            cfg.scenario,
            out.rows.len(),
            t.elapsed().as_secs_f64(),
            files[0].display()
        );
        Ok(out.rows)
    };
    let results: Vec<Result<Vec<ReportRow>>> = if a.parallel {
        cfgs.par_iter().enumerate().map(exec).collect()
    } else {
        cfgs.iter().enumerate().map(exec).collect()
    };
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }

    if batch {
        let dir = a.out.clone().unwrap_or(DEFAULT_OUT.into());
        let fmt = format.unwrap_or_default();
        let body = match fmt {
            Format::Csv => to_csv(&rows),
            Format::Json => to_json(&rows),
        };
        write_atomic(&dir.join(format!("batch.{}", fmt.extension())), &body)
            .context("writing the combined batch report")?;
    }

    let failed: Vec<&ReportRow> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        emit(&format!(
            "FAIL {} [{}] {}: measured {} vs {} {} (tol {})\n",
            r.scenario,
            r.claim,
            r.label,
            fmt_f64(r.measured),
            r.relation.as_str(),
            fmt_f64(r.threshold),
            fmt_f64(r.tolerance)
        ))?;
    }
    emit(&format!("{} rows, {} failed\n", rows.len(), failed.len()))?;
    eprintln!("total runtime {:.2} s", started.elapsed().as_secs_f64());
    Ok(failed.is_empty())
}

fn list() -> Result<bool> {
    let mut out = String::new();
    for s in REGISTRY {
        let engines: Vec<String> = s
            .engines
            .iter()
            .map(|e| serde_json::to_value(e).map(|v| v.as_str().unwrap_or_default().to_string()))
            .collect::<Result<_, _>>()?;
        let _ = writeln!(out, "{}  [{}]\n  {}", s.name, engines.join(", "), s.summary);
        for tag in s.claims {
            let _ = writeln!(out, "    - {tag}");
        }
    }
    out.push_str("\nclaims:\n");
    for c in CLAIMS {
        let _ = writeln!(out, "  {}: {}", c.tag, c.statement);
    }
    emit(&out)?;
    Ok(true)
}

fn check_lemmas(a: LemmaArgs) -> Result<bool> {
    if a.dmax < 2 {
        return usage(format!("--dmax must be at least 2, got {}", a.dmax));
    }
    if a.grid24 < 2 || a.grid25 < 2 {
        return usage("grid sizes must be at least 2");
    }
    let checks: Vec<(&str, GridCheck)> = (2..=a.dmax)
        .into_par_iter()
        .map(|d| -> Result<_> {
            Ok([
                ("ratio-power-gap", lemma24_grid(d, a.grid24)?),
                ("reflection-sum-bound", lemma25_grid(d, a.grid25)?),
            ])
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut csv = String::from("lemma,d,grid_size,worst_gap,pass\n");
    for (lemma, g) in &checks {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            csv_field(lemma),
            g.d,
            g.grid_size,
            fmt_f64(g.worst_gap),
            g.pass()
        );
    }
    match &a.out {
        Some(dir) => {
            let p = dir.join("lemmas.csv");
            write_atomic(&p, &csv).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => emit(&csv)?,
    }
    Ok(checks.iter().all(|(_, g)| g.pass()))
}

fn validate(path: &Path) -> Result<bool> {
    let text = read(path)?;
    let is_batch = matches!(
        serde_json::from_str::<Value>(&text),
        Ok(Value::Object(ref m)) if m.contains_key("scenarios")
    );
    if is_batch {
        let cfgs = parse_batch(&text)?;
        let mut out = format!("valid batch with {} scenario(s)\n", cfgs.len());
        for c in &cfgs {
            let _ = writeln!(out, "{}", c.to_json());
        }
        emit(&out)?;
    } else {
        emit(&format!("{}\n", parse_config(&text)?.to_json()))?;
    }
    Ok(true)
}
