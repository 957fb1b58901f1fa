use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cvmet::{run, Command, RunConfig};

/// Quantum-metrology experiments with indefinite causal order on a bosonic mode.
#[derive(Debug, Parser)]
#[command(name = "cvmet", version)]
struct Cli {
    command: Command,

    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Override a configuration field, e.g. `--set strategy.theta1=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config, &cli.overrides).and_then(|cfg| {
        if let Some(c) = cfg.command {
            if c != cli.command {
                eprintln!("note: config names command {c:?}; running {:?}", cli.command);
            }
        }
        run(cli.command, &cfg, cli.out.as_deref())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvmet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
