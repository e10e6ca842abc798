#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use decaylab::decay::Verdict;
use decaylab::{io, Error};

mod config;
mod pipelines;

use config::{ExperimentConfig, Pipeline};

/// Runs a decay-lab experiment from a TOML config.
///
/// Exit codes: 0 pass, 1 verdict fail, 2 invalid input, 3 numeric failure,
/// 4 hypothesis unmet.
#[derive(Debug, Parser)]
#[command(name = "decaylab", version)]
struct Args {
    /// Experiment config (TOML). Defaults apply to every omitted field.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for probe states and sampling; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Pipeline to run; overrides `pipeline`.
    #[arg(long)]
    pipeline: Option<Pipeline>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_HYPOTHESIS: u8 = 4;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::InvalidDamping { .. }
        | Error::DegenerateInput(_)
        | Error::Parse(_)
        | Error::Io(_) => EXIT_INVALID,
        Error::NumericFailure(_) | Error::OutOfRange { .. } | Error::EmptyWindow(_) | Error::Construction(_) => {
            EXIT_NUMERIC
        }
        Error::HypothesisUnmet(_) => EXIT_HYPOTHESIS,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidDamping { .. } => "invalid_damping",
        Error::DegenerateInput(_) => "degenerate_input",
        Error::Parse(_) => "parse",
        Error::Io(_) => "io",
        Error::NumericFailure(_) => "numeric_failure",
        Error::OutOfRange { .. } => "out_of_range",
        Error::EmptyWindow(_) => "empty_window",
        Error::Construction(_) => "construction",
        Error::HypothesisUnmet(_) => "hypothesis_unmet",
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Pass => 0,
        Verdict::Fail => EXIT_FAIL,
        Verdict::HypothesisUnmet => EXIT_HYPOTHESIS,
    }
}

fn load(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(p) = args.pipeline {
        cfg.pipeline = p;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig) -> Result<u8, Error> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let outcome = pipelines::run(cfg, dir)?;
    let code = verdict_code(outcome.verdict);
    let mut artifacts = outcome.artifacts;
    artifacts.push("report.json".into());
    let report = json!({
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "verdict": outcome.verdict,
        "exit_code": code,
        "artifacts": artifacts,
        "config": cfg,
        "result": outcome.result,
    });
    io::write_json(&report, io::create(dir.join("report.json"))?)?;
    println!(
        "{}: {:?} (exit {code}); artifacts in {}",
        cfg.pipeline,
        outcome.verdict,
        dir.display()
    );
    Ok(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let loaded = load(&args);
    let result = loaded.as_ref().map_err(Clone::clone).and_then(run);
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = error_code(&e);
            let body = json!({
                "error": error_kind(&e),
                "message": e.to_string(),
                "exit_code": code,
            });
            let text = serde_json::to_string_pretty(&body).expect("error JSON serializes");
            eprintln!("{text}");
            let dir = match &loaded {
                Ok(cfg) => Some(cfg.output.dir.clone()),
                Err(_) => args.out.clone(),
            };
            if let Some(dir) = dir {
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("error.json"), text + "\n");
                }
            }
            ExitCode::from(code)
        }
    }
}
