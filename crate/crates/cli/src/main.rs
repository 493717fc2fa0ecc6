use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

mod commands;

/// Simulated foveated visual search with ideal, MAP and Q-network searchers.
#[derive(Debug, Parser)]
#[command(name = "fovsearch", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration (defaults to the built-in reference task).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Root seed; overrides the config. Decimal or 0x-prefixed hex.
    #[arg(long, global = true, value_name = "U64", value_parser = parse_seed)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Number of trials; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    pub trials: Option<usize>,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Log progress and keep per-decision scores in episode logs.
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearcherArg {
    Map,
    Ideal,
    Random,
    Qnet,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play a few episodes and print one JSON log per episode.
    Simulate {
        #[arg(long, value_enum, default_value_t = SearcherArg::Ideal)]
        searcher: SearcherArg,
        /// Directory holding qnet_saccade_<t>.json files.
        #[arg(long, value_name = "DIR", default_value = "checkpoints")]
        checkpoints: PathBuf,
    },
    /// Train one Q network per saccade and write checkpoints and loss curves.
    Train,
    /// Run a battery with one searcher and write its report.
    Evaluate {
        #[arg(long, value_enum, default_value_t = SearcherArg::Ideal)]
        searcher: SearcherArg,
        #[arg(long, value_name = "DIR", default_value = "checkpoints")]
        checkpoints: PathBuf,
    },
    /// Run MAP, ideal and Q-network searchers on paired trials and write a report.
    Compare {
        #[arg(long, value_name = "DIR", default_value = "checkpoints")]
        checkpoints: PathBuf,
    },
    /// Check quadrature against simulation, gradients against finite differences.
    Validate {
        /// Monte-Carlo draws per oracle estimate.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Random (belief, target, fixation) cases for the oracle comparison.
        #[arg(long, default_value_t = 50)]
        cases: usize,
    },
    /// Print the location grid with eccentricity and d' from the initial fixation.
    GridInfo,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    }
    .map_err(|_| format!("{s:?} is not a 64-bit unsigned integer"))
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
