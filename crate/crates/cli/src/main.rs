use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nearmiss_cli::commands::{self, Written};
use nearmiss_cli::{CliError, LoadedConfig};

#[derive(Parser)]
#[command(name = "nearmiss", version, about = "Near-miss crash-risk pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Globalize segment files into per-frame states
    Ingest(Common),
    /// Per-frame TTC of every vehicle pair
    Ttc(Common),
    /// Block maxima per conflicting pair and site summaries
    Blocks(Common),
    /// Fit the configured GEV variants per site group
    Fit(Common),
    /// DIC table across fitted variants
    Compare(Common),
    /// Crash risk and near-miss reports
    Risk(Common),
    /// k-fold validation of exceedance counts
    Validate(Common),
    /// Generate synthetic segments and block datasets
    Synth(Common),
    /// Run ingest through validate
    All(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<Written, CliError> {
    let (common, stage): (Common, fn(&LoadedConfig) -> Result<Written, CliError>) = match cli.command {
        Command::Ingest(c) => (c, commands::cmd_ingest),
        Command::Ttc(c) => (c, commands::cmd_ttc),
        Command::Blocks(c) => (c, commands::cmd_blocks),
        Command::Fit(c) => (c, commands::cmd_fit),
        Command::Compare(c) => (c, commands::cmd_compare),
        Command::Risk(c) => (c, commands::cmd_risk),
        Command::Validate(c) => (c, commands::cmd_validate),
        Command::Synth(c) => (c, commands::cmd_synth),
        Command::All(c) => (c, commands::cmd_all),
    };
    let cfg = LoadedConfig::load(&common.config, common.seed, common.out)?;
    stage(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
