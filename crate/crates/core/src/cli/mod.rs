//! Batch front end: `learn`, `infer`, `certify`, `benchmark` and `plot`.
//!
//! Every command reads one TOML config, applies flag overrides, writes the
//! effective config to `<out>/config.toml`, and leaves its results in `<out>`.
//! Exit codes: 0 success, 1 usage or configuration, 2 domain failure
//! (capacity, infeasibility), 3 numerical failure.

mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use commands::{benchmark, certify, infer, learn, plot};
pub use config::{Method, RunConfig};

use crate::data::PatternSource;
use crate::error::{Error, Result};

/// Version tag written into every `results.json`.
pub const RESULTS_SCHEMA: &str = "tlnmem.results/1";

#[derive(Debug, Parser)]
#[command(name = "tlnmem", version, about = "Associative memory on a chain threshold-linear network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// IDX image file; selects IDX data.
    #[arg(long)]
    data_images: Option<PathBuf>,
    #[arg(long)]
    data_labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a pattern sequence and save the model.
    Learn {
        #[command(flatten)]
        common: Common,
    },
    /// Retrieve clean or corrupted inputs with a saved model.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Certified noise radii for every stored pattern.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Learn and certify many random sequences.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Render SVG figures from a results directory.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(p) = &common.data_images {
        cfg.data.images = Some(p.clone());
        cfg.data.source = PatternSource::Idx;
    }
    if let Some(p) = &common.data_labels {
        cfg.data.labels = Some(p.clone());
    }
    if let Some(m) = common.method {
        cfg.certify.method = m;
    }
    Ok(cfg)
}

/// Parse `args` (program name first), run the command, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Learn { common } => ("learn", common),
        Command::Infer { common, .. } => ("infer", common),
        Command::Certify { common, .. } => ("certify", common),
        Command::Benchmark { common, .. } => ("benchmark", common),
        Command::Plot { common, .. } => ("plot", common),
    };
    let mut cfg = match resolve(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match &cli.command {
        Command::Infer { model: Some(m), .. } => cfg.infer.model = Some(m.clone()),
        Command::Certify { model: Some(m), .. } => cfg.infer.model = Some(m.clone()),
        Command::Benchmark { sequences: Some(s), .. } => cfg.benchmark.sequences = *s,
        Command::Plot { results: Some(r), .. } => cfg.plot.results = Some(r.clone()),
        _ => {}
    }
    let started = Instant::now();
    let result = prepare(&cfg).and_then(|()| match name {
        "learn" => learn(&cfg),
        "infer" => infer(&cfg),
        "certify" => certify(&cfg),
        "benchmark" => benchmark(&cfg),
        _ => plot(&cfg),
    });
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let _ = write_json(
                &cfg.out.join("error.json"),
                &json!({ "schema": RESULTS_SCHEMA, "command": name, "error": e.to_string(), "exit_code": e.exit_code() }),
            );
            e.exit_code()
        }
    };
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let _ = fs::OpenOptions::new().create(true).append(true).open(cfg.out.join("run.log")).and_then(|mut f| {
        use std::io::Write;
        writeln!(f, "{stamp} {name} exit={code} wall={:.3}s", started.elapsed().as_secs_f64())
    });
    code
}

fn prepare(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    let _ = fs::remove_file(cfg.out.join("error.json"));
    crate::data::write_atomic(&cfg.out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    cfg.validate()
}

pub(crate) fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    crate::data::write_atomic(path, text.as_bytes())
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    crate::data::write_atomic(path, &bytes)
}

pub(crate) fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header =
        r.headers().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
