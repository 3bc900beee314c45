use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use polyloc_cli::runner::EXIT_CONFIG;
use polyloc_cli::{init_threads, run, RunOptions, Subcommand};

#[derive(Parser)]
#[command(name = "polyloc", version, about = "Localization audits for polyharmonic spectral expansions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (`section.key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random test functions (overrides function.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Parseval, round-trip, direct-sum and Gaussian checks of the lattice transform
    TransformCheck(Common),
    /// Partition-of-unity residuals, squeeze and support checks
    PartitionCheck(Common),
    /// Localized multiplier bounds and decay fits
    MultiplierAudit(Common),
    /// Restricted maximal-inequality ratio, or its stability over a refinement ladder
    MaximalAudit(Common),
    /// Restricted convergence profile of the partial integrals
    LocalizationRun(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (subcommand, common) = match cli.command {
        Command::TransformCheck(c) => (Subcommand::TransformCheck, c),
        Command::PartitionCheck(c) => (Subcommand::PartitionCheck, c),
        Command::MultiplierAudit(c) => (Subcommand::MultiplierAudit, c),
        Command::MaximalAudit(c) => (Subcommand::MaximalAudit, c),
        Command::LocalizationRun(c) => (Subcommand::LocalizationRun, c),
    };
    if let Err(e) = init_threads() {
        eprintln!("polyloc: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let opts = RunOptions {
        subcommand,
        config: common.config,
        out: common.out,
        seed: common.seed,
    };
    match run(&opts) {
        Ok(report) => {
            for f in &report.failures {
                eprintln!("polyloc: {f}");
            }
            for path in &report.files {
                println!("{}", path.display());
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("polyloc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
