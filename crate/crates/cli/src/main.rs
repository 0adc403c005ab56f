mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use ultramem_core::acceptance::{run_criterion, CriterionReport};

use crate::commands::{Artifact, Outcome};
use crate::config::{Config, ConfigError};

const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser, Debug)]
#[command(name = "ultramem", version, about = "Batch runs of the ultrastrong-coupling memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file of `[section]` tables with `key = value` entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override one entry, e.g. `--set model.lambda=1.1`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    /// Run the acceptance criteria exercised by the subcommand.
    #[arg(long, global = true)]
    check: bool,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Low-lying spectrum along a parameter sweep.
    Spectrum,
    /// Relaxation and dephasing sensitivities over (lambda, theta).
    SensitivityMap,
    /// Dynamical-decoupling suppression factors.
    Dd {
        /// Free-induction reference time in seconds.
        #[arg(long)]
        tau_fid: Option<f64>,
        /// Bath temperature in kelvin.
        #[arg(long)]
        temp: Option<f64>,
        /// Comma-separated pulse counts.
        #[arg(long)]
        pulses: Option<String>,
    },
    /// Storage and retrieval of a qubit in the polarized pair.
    Protocol,
    /// Numeric sensitivities against the closed-form table.
    Table1Check {
        /// Displacement lambda / omega_c.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::SensitivityMap => "sensitivity-map",
            Command::Dd { .. } => "dd",
            Command::Protocol => "protocol",
            Command::Table1Check { .. } => "table1-check",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ultramem_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Threads(String),
    #[error("acceptance check failed: criteria {0:?}")]
    CheckFailed(Vec<u8>),
}

fn is_parameter_error(e: &ultramem_core::Error) -> bool {
    use ultramem_core::Error as E;
    match e {
        E::InvalidParameter(_) | E::InvalidSpace(_) => true,
        E::AtGridPoint { source, .. } => is_parameter_error(source),
        _ => false,
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Threads(_) => 2,
            CliError::Core(e) if is_parameter_error(e) => 2,
            CliError::Core(_) | CliError::Output { .. } => 3,
            CliError::CheckFailed(_) => 4,
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for arg in &cli.overrides {
        cfg.set(arg)?;
    }
    match &cli.command {
        Command::Dd { tau_fid, temp, pulses } => {
            if let Some(x) = tau_fid {
                cfg.set_flag("dd.tau_fid", toml::Value::Float(*x), "tau-fid");
            }
            if let Some(x) = temp {
                cfg.set_flag("dd.temperature", toml::Value::Float(*x), "temp");
            }
            if let Some(p) = pulses {
                cfg.set_flag("dd.pulses", toml::Value::String(p.clone()), "pulses");
            }
        }
        Command::Table1Check { alpha: Some(a) } => {
            cfg.set_flag("table1.alpha", toml::Value::Float(*a), "alpha");
        }
        _ => {}
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

struct RunInfo<'a> {
    command: &'static str,
    seed: u64,
    threads: usize,
    config: &'a Config,
}

/// Key/value sections followed by `sha256sum`-style file lines. The
/// creation time is the only entry that changes between identical runs.
fn manifest(info: &RunInfo, outcome: &Outcome, checks: &[CriterionReport]) -> String {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut m = String::from("# ultramem run manifest\n");
    m += &format!("command = {}\n", info.command);
    m += &format!("version = {}\n", env!("CARGO_PKG_VERSION"));
    m += &format!("seed = {}\n", info.seed);
    m += &format!("threads = {}\n", info.threads);
    m += &format!("created_unix = {created}\n");
    m += "\n[config]\n";
    for (k, v) in info.config.resolved() {
        m += &format!("{k} = {v}\n");
    }
    m += "\n[results]\n";
    for (k, v) in &outcome.results {
        m += &format!("{k} = {v}\n");
    }
    if !checks.is_empty() {
        m += "\n[checks]\n";
        for r in checks {
            m += &format!("criterion_{} = {}\n", r.id, if r.pass() { "pass" } else { "fail" });
        }
    }
    m += "\n[files]\n";
    for a in &outcome.artifacts {
        m += &format!("{}  {}\n", hex::encode(Sha256::digest(&a.bytes)), a.name);
    }
    m
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Threads("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let cfg = build_config(cli)?;
    let outcome = match &cli.command {
        Command::Spectrum => commands::spectrum(&cfg),
        Command::SensitivityMap => commands::sensitivity_map(&cfg),
        Command::Dd { .. } => commands::dd(&cfg),
        Command::Protocol => commands::protocol(&cfg),
        Command::Table1Check { .. } => commands::table1_check(&cfg),
    }?;
    cfg.finish()?;

    for (k, v) in &outcome.results {
        println!("{k} = {v}");
    }

    let checks: Vec<CriterionReport> = if cli.check {
        outcome.criteria.iter().map(|&id| run_criterion(id, cli.seed)).collect()
    } else {
        Vec::new()
    };
    for r in &checks {
        println!("{r}");
    }

    std::fs::create_dir_all(&cli.out).map_err(|source| CliError::Output {
        path: cli.out.display().to_string(),
        source,
    })?;
    for Artifact { name, bytes } in &outcome.artifacts {
        write_file(&cli.out, name, bytes)?;
    }
    let info = RunInfo {
        command: cli.command.name(),
        seed: cli.seed,
        threads: rayon::current_num_threads(),
        config: &cfg,
    };
    write_file(&cli.out, "manifest.txt", manifest(&info, &outcome, &checks).as_bytes())?;

    let failed: Vec<u8> = checks.iter().filter(|r| !r.pass()).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
