//! `latentvar`: latent-space correlation scenarios and credit VaR from the command line.

mod commands;
mod config;
mod manifest;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use latentvar::ErrorKind;

use crate::config::RunConfig;

/// Invalid configuration or command-line usage.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "latentvar",
    version,
    about = "Correlation scenarios from a variational autoencoder and their credit VaR"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a returns or prices CSV and build the rolling correlation panel.
    Ingest {
        /// Input CSV; overrides `data.returns`.
        #[arg(long)]
        returns: Option<PathBuf>,
    },
    /// Generate a regime-switching synthetic market and its correlation panel.
    Synthdata,
    /// Train the VAE (and comparison models) on the panel.
    Train,
    /// Encode the panel and analyse the latent series.
    Encode,
    /// Sample a latent grid and decode it into repaired correlation matrices.
    Generate,
    /// Stylized-fact checks on historical and generated matrices.
    Facts,
    /// Monte Carlo credit VaR under one correlation matrix.
    Var {
        /// Correlation matrix CSV; defaults to the mean historical matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Portfolio JSON; overrides the config.
        #[arg(long)]
        portfolio: Option<PathBuf>,
    },
    /// Credit VaR at every generated grid point.
    Surface,
    /// Bootstrap latent paths and read VaR off the surface.
    Bootstrap,
    /// Assemble figures and a summary from existing artifacts.
    Report,
    /// Every stage in order.
    Run,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<clap::Error>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<latentvar::Error>() {
            return match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            };
        }
    }
    3
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.global.out {
        cfg.out = Some(out);
    }
    if let Command::Ingest { returns: Some(p) } = &cli.command {
        cfg.data.returns = Some(p.clone());
    }
    cfg.validate()?;
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("thread pool: {e}")))?;
    }
    let mut ctx = commands::Context::new(cfg)?;
    match cli.command {
        Command::Ingest { .. } => commands::ingest(&mut ctx),
        Command::Synthdata => commands::synthdata(&mut ctx),
        Command::Train => commands::train(&mut ctx),
        Command::Encode => commands::encode(&mut ctx),
        Command::Generate => commands::generate(&mut ctx),
        Command::Facts => commands::facts(&mut ctx),
        Command::Var { matrix, portfolio } => commands::var(&mut ctx, matrix.as_deref(), portfolio.as_deref()),
        Command::Surface => commands::surface(&mut ctx),
        Command::Bootstrap => commands::bootstrap(&mut ctx),
        Command::Report => commands::report(&mut ctx),
        Command::Run => commands::run_all(&mut ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let numerical = anyhow::Error::new(latentvar::Error::NotPsd(-0.1)).context("var: matrix");
        assert_eq!(exit_code(&numerical), 4);
        let data = anyhow::Error::new(latentvar::Error::Shape("x".into()));
        assert_eq!(exit_code(&data), 3);
        let cfg = anyhow::Error::new(ConfigError("bad".into())).context("outer");
        assert_eq!(exit_code(&cfg), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 3);
    }

    #[test]
    fn cli_parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["latentvar", "train", "--seed", "5", "--threads", "2"]).unwrap();
        assert_eq!(cli.global.seed, Some(5));
        assert_eq!(cli.global.threads, Some(2));
        assert!(matches!(cli.command, Command::Train));
    }
}
