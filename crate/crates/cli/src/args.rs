use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "invfilter", version, about = "Inverse filtering experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo experiment: RMSE, NCI, bounds and timing per filter.
    Run(RunArgs),
    /// Fourth-moment convergence study of the inverse particle filter.
    Converge(ConvergeArgs),
    /// Print the built-in scenarios.
    ListScenarios,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; overrides the config.
    #[arg(long, env = "INVFILTER_SEED")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker thread cap; 0 uses every core. Does not change the output.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").args(["scenario", "config"]))]
pub struct RunArgs {
    /// Built-in scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
    /// JSON scenario config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the number of Monte Carlo runs.
    #[arg(long)]
    pub runs: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").args(["scenario", "config"]))]
pub struct ConvergeArgs {
    /// Built-in scenario providing the model; the study uses its defaults.
    #[arg(long)]
    pub scenario: Option<String>,
    /// JSON convergence-study config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the repetitions per particle count.
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}
