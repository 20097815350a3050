//! `starris`: experiments on max-min SINR with a simultaneously transmitting
//! and reflecting surface. Every run writes CSV tables plus a manifest that
//! `starris replay` uses to reproduce them.

mod commands;
mod output;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use starris_core::config::{Design, RunConfig, SystemConfig};

use output::{now_rfc3339, CommandRecord, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Io(String),
    Solver(String),
    Bound(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Bound(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
            CliError::Solver(m) => write!(f, "solver: {m}"),
            CliError::Bound(m) => write!(f, "validation: {m}"),
        }
    }
}

impl From<starris_core::Error> for CliError {
    fn from(e: starris_core::Error) -> Self {
        match e {
            starris_core::Error::Config(m) => CliError::Config(m),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Es,
    Ms,
    Conventional,
}

impl From<ProtocolArg> for Design {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Es => Design::Es,
            ProtocolArg::Ms => Design::Ms,
            ProtocolArg::Conventional => Design::Conventional,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "starris", version, about = "Max-min SINR experiments for STAR-RIS aided downlinks")]
struct Cli {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Channel realizations per point (overrides the configuration).
    #[arg(long, global = true, value_name = "N")]
    realizations: Option<usize>,
    /// Surface design (overrides the configuration).
    #[arg(long, global = true, value_enum)]
    protocol: Option<ProtocolArg>,
    /// Output directory, created if needed.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic equivalent at the default (or a given) surface state.
    De {
        /// Surface state record to evaluate instead of the equal split.
        #[arg(long, value_name = "PATH")]
        pbm: Option<PathBuf>,
    },
    /// Multi-start gradient ascent over the surface state.
    Pgam,
    /// Optimize and simulate over a range of one parameter.
    Sweep {
        /// N, M, P_max_dB, kappa_bs, kappa_ue or phase_noise_kappa.
        #[arg(long, value_name = "NAME")]
        var: String,
        /// Comma-separated, strictly increasing.
        #[arg(long, value_name = "LIST")]
        values: String,
    },
    /// Compare the equivalent with Monte-Carlo at the configured sizes.
    Validate,
    /// Energy splitting vs mode switching vs a reflect-only surface.
    Compare,
    /// Re-run a manifest and check that every output is reproduced.
    Replay {
        manifest: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<SystemConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            SystemConfig::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => SystemConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.run.seed = s;
    }
    if let Some(n) = cli.realizations {
        config.run.realizations = n;
    }
    if let Some(p) = cli.protocol {
        config.optimizer.protocol = p.into();
    }
    config.validate()?;
    Ok(config)
}

fn record(command: &Command) -> Result<CommandRecord, CliError> {
    Ok(match command {
        Command::De { pbm } => CommandRecord::De {
            pbm: pbm
                .as_ref()
                .map(|p| fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))))
                .transpose()?,
        },
        Command::Pgam => CommandRecord::Pgam,
        Command::Sweep { var, values } => {
            var.parse::<starris_core::config::SweepVariable>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            CommandRecord::Sweep { var: var.clone(), values: commands::parse_values(values)? }
        }
        Command::Validate => CommandRecord::Validate,
        Command::Compare => CommandRecord::Compare,
        Command::Replay { .. } => unreachable!("replay is dispatched separately"),
    })
}

/// Runs one command into `out` and writes its manifest.
fn execute(command: CommandRecord, config: &SystemConfig, out: &Path) -> Result<RunManifest, CliError> {
    fs::create_dir_all(out)?;
    log::info!("running {} into {}", command.name(), out.display());
    let started = now_rfc3339();
    let report = commands::run(&command, config, out)?;
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        seed: config.run.seed,
        realizations: config.run.realizations,
        reduced_budget: config.run.realizations < RunConfig::default().realizations,
        config: config.to_toml_string(),
        started,
        finished: now_rfc3339(),
        outputs: report.outputs.files,
        failures: report.failures,
    };
    manifest.write(out)?;
    if manifest.reduced_budget {
        log::warn!(
            "{} realizations is below the default budget of {}; flagged in the manifest",
            manifest.realizations,
            RunConfig::default().realizations
        );
    }
    if let Some(msg) = report.bound_exceeded {
        return Err(CliError::Bound(msg));
    }
    Ok(manifest)
}

fn replay(path: &Path, out: &Path) -> Result<(), CliError> {
    let path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let original = RunManifest::read(&path).map_err(CliError::Config)?;
    let config = SystemConfig::from_toml_str(&original.config)?;
    let fresh = execute(original.command.clone(), &config, out)?;
    let differing = original.mismatches(out);
    let missing: Vec<&str> = fresh
        .outputs
        .iter()
        .filter(|o| !original.outputs.iter().any(|p| p.path == o.path))
        .map(|o| o.path.as_str())
        .collect();
    if !differing.is_empty() || !missing.is_empty() {
        return Err(CliError::Bound(format!(
            "replay differs from the manifest: changed {differing:?}, unexpected {missing:?}"
        )));
    }
    println!("reproduced {} files from {}", original.outputs.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest, &cli.out);
    }
    let config = load_config(&cli)?;
    let command = record(&cli.command)?;
    execute(command, &config, &cli.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
