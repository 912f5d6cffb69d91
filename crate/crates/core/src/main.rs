use std::path::PathBuf;
use std::process::ExitCode;

use aggrsim::io::{self, parse_config, Subcommand, EXIT_CONFIG};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Particles1,
    Particles2,
    Pde1d,
    Pde2d,
    Kinetic1d,
    Stability,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Particles1 => Subcommand::Particles1,
            Command::Particles2 => Subcommand::Particles2,
            Command::Pde1d => Subcommand::Pde1d,
            Command::Pde2d => Subcommand::Pde2d,
            Command::Kinetic1d => Subcommand::Kinetic1d,
            Command::Stability => Subcommand::Stability,
        }
    }
}

/// Direct aggregation simulator.
///
/// Set AGGRSIM_THREADS to cap the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "aggrsim", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Command,
    /// `key = value` run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let sub = Subcommand::from(cli.subcommand);
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("aggrsim {sub}: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let mut cfg = match parse_config(sub, &text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("aggrsim {sub}: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.out_dir = cli.out;

    if let Some(n) = std::env::var("AGGRSIM_THREADS").ok().filter(|s| !s.is_empty()) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("aggrsim: AGGRSIM_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
        }
    }
    ExitCode::from(io::run(&cfg) as u8)
}
