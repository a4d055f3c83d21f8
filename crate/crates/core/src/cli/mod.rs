//! The `dnls` command line: one experiment per run, artifacts and a manifest in
//! the output directory.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
//! configuration error, 3 on numerical blow-up.

pub mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};
use thiserror::Error;

use crate::convergence::ConvergenceError;
use crate::dynamics::DynamicsError;
use crate::hopping::HoppingError;
use crate::lattice::LatticeError;
use crate::observables::ObservablesError;
use crate::sampling::SamplingError;

pub use config::{Experiment, RunConfig};
pub use output::{Check, FileEntry, Manifest};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DNLS_THREADS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical blow-up: {0}")]
    BlowUp(String),
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BlowUp(_) => EXIT_BLOW_UP,
            _ => EXIT_CONFIG,
        }
    }

    fn status(&self) -> &'static str {
        match self {
            CliError::BlowUp(_) => "blow-up",
            CliError::Config(_) => "config-error",
            CliError::Io { .. } => "io-error",
            CliError::Internal(_) => "internal-error",
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BlowUp { .. } => CliError::BlowUp(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ConvergenceError> for CliError {
    fn from(e: ConvergenceError) -> Self {
        match e {
            ConvergenceError::Dynamics(d) => d.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

macro_rules! config_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Config(e.to_string())
            }
        }
    )*};
}

config_error_from!(HoppingError, LatticeError, ObservablesError, SamplingError);

#[derive(Debug, Parser)]
#[command(
    name = "dnls",
    version,
    about = "Discrete nonlinear Schrödinger lattice experiments",
    after_help = "Any configuration field can be set with a dotted flag, e.g. \
                  `--dynamics.dt 1e-3` or `--lattice.L=64`. Values are parsed as JSON \
                  when possible. Set DNLS_THREADS to bound the worker pool."
)]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// simulate, conserve, bound-check, sweep-L, uniqueness, sample-gaussian,
    /// sample-gibbs or stats.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

type Overrides = Vec<(String, Value)>;

/// Separates `--a.b value` / `--a.b=value` overrides from the named flags.
fn split_overrides(args: &[String]) -> Result<(Vec<String>, Overrides), CliError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a.clone());
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(a.clone());
            continue;
        }
        let raw = match inline {
            Some(v) => v,
            None => it
                .next()
                .cloned()
                .ok_or_else(|| CliError::Config(format!("flag --{key} needs a value")))?,
        };
        overrides.push((key.to_string(), config::parse_value(&raw)));
    }
    Ok((rest, overrides))
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Entry point of the binary; `args` includes the program name.
pub fn run_cli<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let args: Vec<String> = args.into_iter().collect();
    let (named, mut overrides) = match split_overrides(args.get(1..).unwrap_or(&[])) {
        Ok(v) => v,
        Err(e) => return report_error(&e),
    };
    let parsed = match Args::try_parse_from(std::iter::once("dnls".to_string()).chain(named)) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_CONFIG
            } else {
                EXIT_PASS
            };
        }
    };
    if let Some(x) = &parsed.experiment {
        overrides.push(("experiment".into(), Value::String(x.clone())));
    }
    if let Some(s) = parsed.seed {
        overrides.push(("seed".into(), json!(s)));
    }
    if let Some(o) = &parsed.out {
        overrides.push(("out".into(), Value::String(o.display().to_string())));
    }
    let cfg = match RunConfig::assemble(parsed.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    if parsed.print_config {
        match serde_json::to_string_pretty(&cfg) {
            Ok(s) => println!("{s}"),
            Err(e) => return report_error(&CliError::Internal(e.to_string())),
        }
        return EXIT_PASS;
    }
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => return report_error(&e),
    };
    match threads {
        None => run(&cfg),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cfg)),
            Err(e) => report_error(&CliError::Internal(e.to_string())),
        },
    }
}

fn report_error(e: &CliError) -> i32 {
    eprintln!("dnls: {e}");
    e.exit_code()
}

/// Runs the configured experiment and writes its manifest.
pub fn run(cfg: &RunConfig) -> i32 {
    let start = Instant::now();
    let mut writer = match output::RunWriter::create(&cfg.out) {
        Ok(w) => w,
        Err(e) => return report_error(&e),
    };
    let outcome = experiments::dispatch(cfg, &mut writer);
    let elapsed = start.elapsed().as_secs_f64();
    let config_echo = serde_json::to_value(cfg).unwrap_or(Value::Null);
    let mut manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment.name().to_string(),
        seed: cfg.seed,
        config: config_echo,
        status: String::new(),
        exit_code: EXIT_PASS,
        error: None,
        results: Value::Null,
        checks: Vec::new(),
        files: Vec::new(),
        wall_clock: json!({ "elapsed_seconds": elapsed }),
    };
    match outcome {
        Ok(o) => {
            let pass = o.checks.iter().all(|c| c.pass);
            manifest.status = if pass { "pass" } else { "fail" }.into();
            manifest.exit_code = if pass { EXIT_PASS } else { EXIT_CHECK_FAILED };
            manifest.results = o.results;
            manifest.checks = o.checks;
            if !o.timing.is_null() {
                manifest.wall_clock["detail"] = o.timing;
            }
        }
        Err(e) => {
            eprintln!("dnls: {e}");
            manifest.status = e.status().into();
            manifest.exit_code = e.exit_code();
            manifest.error = Some(e.to_string());
        }
    }
    for c in &manifest.checks {
        println!(
            "check {}: {} {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let code = manifest.exit_code;
    println!(
        "dnls {}: {} (exit {code}) -> {}",
        manifest.experiment,
        manifest.status,
        writer.root().display()
    );
    if let Err(e) = writer.finish(manifest) {
        return report_error(&e);
    }
    code
}
