//! `edgepir`: encode caches, run private retrievals, and compute the rate
//! tables of a cache-aided cellular network.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use edgepir::cache::CacheError;
use edgepir::codes::CodeError;
use edgepir::gf::GfError;
use edgepir::optimizer::OptimizerError;
use edgepir::pirproto::ProtoError;
use edgepir::rates::RatesError;
use edgepir::simnet::SimError;
use edgepir::topology::TopologyError;

use crate::commands::Ctx;
use crate::config::{ConfigError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "edgepir", version, about = "Private retrieval from coded edge caches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode the library into SBS caches and write a snapshot.
    Encode(Common),
    /// Run one private retrieval and print its transcript.
    Retrieve(Common),
    /// Closed-form backhaul and SBS rates for the configured placement.
    Rates(Common),
    /// Scan uniform placements for the minimum weighted rate.
    Optimize(Common),
    /// Optimal placement across cache sizes or SBS densities.
    Sweep(Common),
    /// Check that T-coalitions learn nothing about the requested file.
    VerifyPrivacy(Common),
    /// Monte-Carlo sessions compared with the closed-form rates.
    Simulate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig2, fig3, fig4, fig5 or fig6.
    #[arg(long)]
    preset: Option<String>,
    /// RNG seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte-Carlo trials or privacy sessions.
    #[arg(long)]
    trials: Option<u64>,
}

/// A configuration that is well-formed but asks for something the scheme
/// cannot do.
#[derive(Debug)]
pub struct ConstraintError(String);

impl fmt::Display for ConstraintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConstraintError {}

pub fn constraint_err(msg: impl Into<String>) -> anyhow::Error {
    ConstraintError(msg.into()).into()
}

#[derive(Debug)]
pub struct VerificationError(String);

impl fmt::Display for VerificationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationError {}

pub fn verification_err(msg: impl Into<String>) -> anyhow::Error {
    VerificationError(msg.into()).into()
}

const CONFIG: u8 = 2;
const CONSTRAINT: u8 = 3;
const VERIFICATION: u8 = 4;

fn cache_code(e: &CacheError) -> u8 {
    match e {
        CacheError::Gf(_) | CacheError::Popularity(_) | CacheError::FileSize { .. } | CacheError::NotBinary(_) => CONFIG,
        CacheError::Snapshot(_) | CacheError::Io(_) => 1,
        _ => CONSTRAINT,
    }
}

fn proto_code(e: &ProtoError) -> u8 {
    match e {
        ProtoError::Inconsistent { .. } => VERIFICATION,
        ProtoError::Cache(c) => cache_code(c),
        _ => CONSTRAINT,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<TopologyError>() || cause.is::<GfError>() {
            return CONFIG;
        }
        if cause.is::<ConstraintError>() || cause.is::<CodeError>() || cause.is::<RatesError>() {
            return CONSTRAINT;
        }
        if cause.is::<VerificationError>() {
            return VERIFICATION;
        }
        if let Some(e) = cause.downcast_ref::<CacheError>() {
            return cache_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ProtoError>() {
            return proto_code(e);
        }
        if let Some(e) = cause.downcast_ref::<OptimizerError>() {
            return match e {
                OptimizerError::BadCacheSize(_) | OptimizerError::BadTheta(_) | OptimizerError::Topology(_) => CONFIG,
                _ => CONSTRAINT,
            };
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::Proto(p) => proto_code(p),
                SimError::Cache(c) => cache_code(c),
                SimError::RecoveryMismatch(_) => VERIFICATION,
                SimError::UnknownFile(_) | SimError::BadCoverage(_) | SimError::SbsCount { .. } | SimError::NoTrials => CONFIG,
                _ => CONSTRAINT,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (Command::Encode(c)
    | Command::Retrieve(c)
    | Command::Rates(c)
    | Command::Optimize(c)
    | Command::Sweep(c)
    | Command::VerifyPrivacy(c)
    | Command::Simulate(c)) = &cli.command;
    let cfg = match (&c.config, &c.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(config::config_err("pass --config PATH or --preset NAME")),
    };
    let ctx = Ctx {
        seed: c.seed.or(cfg.seed).unwrap_or(0),
        cfg,
        out: c.out.clone(),
        trials: c.trials,
    };
    match cli.command {
        Command::Encode(_) => commands::encode(&ctx),
        Command::Retrieve(_) => commands::retrieve(&ctx),
        Command::Rates(_) => commands::rates(&ctx),
        Command::Optimize(_) => commands::optimize(&ctx),
        Command::Sweep(_) => commands::sweep(&ctx),
        Command::VerifyPrivacy(_) => commands::verify_privacy(&ctx),
        Command::Simulate(_) => commands::simulate(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
