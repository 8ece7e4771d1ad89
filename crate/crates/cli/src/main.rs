//! `shockstab`: spectral analysis, Green kernels, simulations and the
//! symmetrizer separation report from JSON run configurations.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shockstab_core::Error;

use crate::commands::{error_json, exit_code, run, Context};
use crate::config::{Command, RunConfig};

#[derive(Parser)]
#[command(name = "shockstab", version, about = "Stability of Riemann shocks for hyperbolic balance laws")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Gap to certify, overriding the configuration.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Random seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Hyperbolicity, Lax counts, Fourier spectra and gap certification.
    Analyze,
    /// Nonlinear simulation with norm series and optional energy monitor.
    Simulate,
    /// Linear propagation through the Green kernels.
    Green,
    /// Spectral stability versus dissipative symmetrizability.
    Symmetrizer,
    /// Batch of named runs.
    Report,
}

impl Sub {
    fn command(self) -> Command {
        match self {
            Sub::Analyze => Command::Analyze,
            Sub::Simulate => Command::Simulate,
            Sub::Green => Command::Green,
            Sub::Symmetrizer => Command::Symmetrizer,
            Sub::Report => Command::Report,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let command = cli.command.command();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None if command == Command::Symmetrizer => RunConfig::parse(r#"{"command": "symmetrizer"}"#)?,
        None => return Err(Error::Config("--config is required for this subcommand".into())),
    };
    if cfg.command != command {
        return Err(Error::Config(format!("config is for '{:?}', not '{:?}'", cfg.command, command).to_lowercase()));
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = Some(a);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHOCKSTAB_LOG", "warn")).init();
    if cli.jobs == 0 {
        eprintln!("{}", error_json(&Error::Config("--jobs must be positive".into())));
        return ExitCode::from(2);
    }
    // a second initialization is harmless and only logged
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        log::debug!("thread pool: {e}");
    }
    let result = load(&cli).and_then(|cfg| {
        let base = cli.config.as_ref().and_then(|p| p.parent().map(|d| d.to_path_buf())).unwrap_or_default();
        run(&cfg, &Context { out: cli.out.clone(), base, jobs: cli.jobs })
    });
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string(&outcome.summary).unwrap_or_default());
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
