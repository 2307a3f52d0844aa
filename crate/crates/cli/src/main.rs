//! `orisk`: evaluate norms, risk measures, duals and probes on scenario files.
//!
//! Exit status is 0 on success, 1 on usage, parse or I/O errors and 2 when
//! the input is well formed but mathematically rejected.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "orisk", version, about = "Risk measures on Orlicz spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Flat `key=value` file with probe settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel probes.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Luxemburg,
    Orlicz,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    ExpTruncation,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Luxemburg norm of a scenario vector, or the Orlicz norm of it as a dual element.
    Norm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        phi: String,
        #[arg(long, value_enum, default_value_t = NormKind::Luxemburg)]
        kind: NormKind,
    },
    /// Fenchel conjugate of a measure at a density file, or the Orlicz conjugate at each input value.
    Conjugate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, conflicts_with = "phi", required_unless_present = "phi")]
        measure: Option<String>,
        #[arg(long)]
        phi: Option<String>,
    },
    /// Value-at-Risk.
    Var {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Expected Shortfall.
    Es {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Kusuoka mixture value and the maximizing candidate.
    Kusuoka {
        #[arg(long)]
        input: PathBuf,
        /// `kusuoka:<path>` or a bare path to the candidate CSV.
        #[arg(long)]
        measure: String,
    },
    /// Conditional expectation on a partition file with column `block_id`.
    Condexp {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        partition: PathBuf,
    },
    /// Greedy ES dual, or a biconjugate check of a measure against density files.
    Dual {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, required_unless_present = "measure")]
        alpha: Option<f64>,
        #[arg(long, conflicts_with = "alpha", requires = "density")]
        measure: Option<String>,
        #[arg(long)]
        density: Vec<PathBuf>,
    },
    /// Trace of rho(E[X | pi_n]) along the tail-threshold partitions of a law.
    Extend {
        #[arg(long)]
        measure: String,
        /// `exp:rate=R`, `neg_exp:rate=R` or `file:<path>`.
        #[arg(long)]
        law: String,
        #[arg(long)]
        phi: String,
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
    /// The shifted-mean measure: on a file, or along the truncated exponential family.
    Counterexample {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "exp_minus_one")]
        phi: String,
        #[arg(long, default_value_t = 10)]
        depth: usize,
    },
    /// Falsifiable property probes.
    Probe {
        #[command(subcommand)]
        probe: Probe,
    },
}

#[derive(Subcommand, Debug)]
pub enum Probe {
    /// Declared axioms on a random population.
    Axioms {
        #[arg(long)]
        measure: String,
    },
    /// Fatou property along dominated sequences or a named family.
    Fatou {
        #[arg(long)]
        measure: String,
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
    /// rho(E[X | pi]) <= rho(X) over random partitions.
    Dilatation {
        #[arg(long)]
        measure: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// E[|E[X | pi_k] - X| Y] along a refinement chain.
    Coex {
        #[arg(long)]
        input: PathBuf,
        /// Weight file with column `value`; defaults to `Y = 1`.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Chain members, coarse to fine; defaults to trivial, pairs, singletons.
        #[arg(long)]
        partition: Vec<PathBuf>,
    },
    /// Largest block mean over mixed tail and bulk blocks.
    Blowup {
        #[arg(long)]
        law: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orisk: {e}");
            ExitCode::from(if e.is_domain() { 2 } else { 1 })
        }
    }
}
