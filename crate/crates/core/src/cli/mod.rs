//! The `adgan` command line: synthesize, featurize, train, eval, analyze
//! and reproduce.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical abort. Every numeric file starts with a `#` line carrying
//! the seed and a config hash.

mod commands;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use output::{Cell, Format, Table};

use crate::batching::SamplingStrategy;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable giving the default output directory.
pub const OUT_ENV: &str = "ADGAN_OUT";

#[derive(Parser, Debug)]
#[command(
    name = "adgan",
    version,
    about = "Asymmetric cross-domain GAN for risk-tolerance classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    #[value(alias = "oversample")]
    Over,
    #[value(alias = "undersample")]
    Under,
}

impl From<StrategyArg> for SamplingStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => SamplingStrategy::Random,
            StrategyArg::Over => SamplingStrategy::Oversample,
            StrategyArg::Under => SamplingStrategy::Undersample,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUT_ENV, default_value = "adgan-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding transactions.csv, surveys.csv and labels.csv.
    #[arg(long)]
    pub data: PathBuf,
    /// Category scheme file (`category = stratum|life:<label>` lines).
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    /// Seed of the stratified train/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// `key = value` training config applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// `key = value` generator config applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write consumer vectors, compressed surveys and the expense-group report.
    Featurize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Train one model and save its checkpoint and loss log.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score a checkpoint on the held-out split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Descriptive statistics and plot-ready series of a dataset.
    Analyze {
        #[command(flatten)]
        data: DataArgs,
        /// Fraction of agreeing answers that counts as a near-duplicate.
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Synthesize, train the three sampling variants over repeated seeds
    /// and compare them with the logistic baseline.
    Reproduce {
        #[command(flatten)]
        train: TrainArgs,
        /// Generator config applied on top of the synthetic preset.
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Training runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Results go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match commands::dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
