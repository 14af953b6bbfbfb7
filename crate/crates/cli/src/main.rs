//! `sqq` command-line driver.
//!
//! Exit codes: 0 completed or answered, 2 blow-up detected, 3 numerical
//! breakdown, 4 configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sqq_core::config::ScenarioConfig;
use sqq_core::scenario::{run_scenario, Command, Outcome, Provenance, ScenarioEnv};
use sqq_core::SqqError;
use thiserror::Error;

const EXIT_OK: u8 = 0;
const EXIT_BLOWUP: u8 = 2;
const EXIT_BREAKDOWN: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(name = "sqq", version, about = "Peakons, simulations and blow-up certificates")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form single and two-peakon trajectories and profiles.
    Peakon(Common),
    /// Conservative finite-volume run with diagnostics.
    Simulate(Common),
    /// Weak-form residuals of peakon candidates.
    Verify(Common),
    /// Blow-up certificate, design search and confirming run.
    Blowup(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario config, or a manifest `{"manifest": [paths]}`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for manifests.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] SqqError),
    #[error("scenario kind {kind:?} cannot run under `sqq {command}`")]
    WrongCommand { kind: String, command: &'static str },
    #[error("SQQ_SEED must be an unsigned integer, got {0:?}")]
    Seed(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => e.exit_code() as u8,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    manifest: Vec<PathBuf>,
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Peakon => "peakon",
        Command::Simulate => "simulate",
        Command::Verify => "verify",
        Command::Blowup => "blowup",
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn search_env() -> Result<ScenarioEnv, CliError> {
    match std::env::var("SQQ_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(|seed| ScenarioEnv {
                search_seed: Some(seed),
            })
            .map_err(|_| CliError::Seed(s)),
        Err(_) => Ok(ScenarioEnv::default()),
    }
}

fn run_one(command: Command, config: &Path, out: &Path, env: &ScenarioEnv) -> Result<Outcome, CliError> {
    let bytes = read(config)?;
    let text = String::from_utf8_lossy(&bytes);
    let cfg = ScenarioConfig::from_json(&text)?;
    if !command.accepts(cfg.kind) {
        return Err(CliError::WrongCommand {
            kind: format!("{:?}", cfg.kind),
            command: command_name(command),
        });
    }
    let prov = Provenance::new(&bytes, &[("sqq-cli", env!("CARGO_PKG_VERSION"))]);
    let result = run_scenario(&cfg, &prov, env)?;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_owned(),
        source,
    })?;
    for f in &result.files {
        let path = out.join(&f.name);
        fs::write(&path, &f.contents).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(result.outcome)
}

fn outcome_code(o: Outcome) -> u8 {
    match o {
        Outcome::Completed => EXIT_OK,
        Outcome::BlowupDetected => EXIT_BLOWUP,
        Outcome::Breakdown => EXIT_BREAKDOWN,
    }
}

fn report(config: &Path, r: &Result<Outcome, CliError>) -> u8 {
    match r {
        Ok(o) => {
            eprintln!("{}: {:?}", config.display(), o);
            outcome_code(*o)
        }
        Err(e) => {
            eprintln!("{}: error: {e}", config.display());
            e.exit_code()
        }
    }
}

/// Runs every entry of a manifest, each into `out/<file stem>`. The exit
/// code is the largest of the individual codes.
fn run_manifest(command: Command, path: &Path, m: Manifest, c: &Common, env: &ScenarioEnv) -> u8 {
    let base = path.parent().unwrap_or(Path::new("."));
    let entries: Vec<PathBuf> = m.manifest.iter().map(|p| base.join(p)).collect();
    let codes = Mutex::new(vec![EXIT_OK; entries.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..c.jobs.clamp(1, entries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = entries.get(i) else { break };
                let stem = cfg.file_stem().unwrap_or_default();
                let r = run_one(command, cfg, &c.out.join(stem), env);
                let code = report(cfg, &r);
                codes.lock().expect("no worker panics while holding the lock")[i] = code;
            });
        }
    });
    codes
        .into_inner()
        .unwrap_or_default()
        .into_iter()
        .max()
        .unwrap_or(EXIT_OK)
}

fn dispatch(command: Command, c: &Common) -> u8 {
    let env = match search_env() {
        Ok(env) => env,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let bytes = match read(&c.config) {
        Ok(b) => b,
        Err(e) => return report(&c.config, &Err(e)),
    };
    let is_manifest = serde_json::from_slice::<serde_json::Value>(&bytes)
        .map(|v| v.get("manifest").is_some())
        .unwrap_or(false);
    if !is_manifest {
        return report(&c.config, &run_one(command, &c.config, &c.out, &env));
    }
    match serde_json::from_slice::<Manifest>(&bytes) {
        Ok(m) => run_manifest(command, &c.config, m, c, &env),
        Err(e) => {
            let err = CliError::Manifest {
                path: c.config.clone(),
                message: e.to_string(),
            };
            report(&c.config, &Err(err))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    let code = match &cli.command {
        Sub::Peakon(c) => dispatch(Command::Peakon, c),
        Sub::Simulate(c) => dispatch(Command::Simulate, c),
        Sub::Verify(c) => dispatch(Command::Verify, c),
        Sub::Blowup(c) => dispatch(Command::Blowup, c),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let nf = CliError::Core(SqqError::NonFinite { what: "m", index: 0 });
        assert_eq!(nf.exit_code(), EXIT_BREAKDOWN);
        let cfg = CliError::Core(SqqError::Config("grid.N".into()));
        assert_eq!(cfg.exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::Seed("x".into()).exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn outcomes_map_to_exit_codes() {
        assert_eq!(outcome_code(Outcome::Completed), 0);
        assert_eq!(outcome_code(Outcome::BlowupDetected), 2);
        assert_eq!(outcome_code(Outcome::Breakdown), 3);
    }
}
