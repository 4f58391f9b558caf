//! `pdt`: featurize traces, train and compile partitioned trees, estimate
//! switch resources, simulate the data plane and search the design space.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, msg: msg.into() }
    }
    pub fn input(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, msg: msg.into() }
    }
    pub fn infeasible(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_INFEASIBLE, msg: msg.into() }
    }
    pub fn internal(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_INTERNAL, msg: msg.into() }
    }
}

impl From<pdt_core::Error> for CliError {
    fn from(e: pdt_core::Error) -> Self {
        use pdt_core::Error as E;
        let code = match &e {
            E::Config(_) => EXIT_USAGE,
            E::ModelIntegrity(_) => EXIT_INTERNAL,
            _ => EXIT_INPUT,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pdt", version, about = "Partitioned decision trees for match-action pipelines")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML file with [profile], [environment], [search], [synth] and [[features]].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the seeded window-localized synthetic trace.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of flows (default from [synth]).
        #[arg(long)]
        flows: Option<usize>,
    },
    /// Cut flows into windows and compute the feature catalog per window.
    Featurize {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        partitions: usize,
        /// Feature width in bits: 8, 16 or 32.
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a partitioned model (or the monolithic top-k baseline).
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Partition depths, e.g. `2-3-1`; must match the dataset's windows.
        #[arg(long)]
        sizes: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        width: Option<u32>,
        /// Train the monolithic top-k tree on a one-window dataset instead.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a model into feature and model tables plus a rule dump.
    Compile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate TCAM, stages, flow capacity and recirculation bandwidth.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        /// Windowed dataset used to measure per-partition exit fractions;
        /// without it every flow is assumed to traverse all partitions.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Flows the deployment must hold (default from [search]).
        #[arg(long)]
        required_flows: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace through the simulated pipeline.
    Simulate {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Hash flows into this many register slots instead of exact indexing.
        #[arg(long)]
        hashed: Option<usize>,
        /// Close windows every N packets instead of using the flow size.
        #[arg(long)]
        count_only: Option<u64>,
        /// Write a per-event log (events.log).
        #[arg(long)]
        debug: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline inference over a windowed dataset.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search the design space for the F1 / flow-capacity frontier.
    Search {
        /// Flow trace; defaults to the synthetic trace from [synth].
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Number of batches (default from [search]).
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn search and simulation outputs into plot-ready CSVs.
    Report {
        /// Output directory of `search`.
        #[arg(long)]
        search: Option<PathBuf>,
        /// Output directory of `simulate`.
        #[arg(long)]
        simulate: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
