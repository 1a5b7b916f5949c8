use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use grainsim::harness::{self, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "grainsim", version, about = "Birth-and-growth simulation and causal-cone identity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config without sampling anything.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the ensemble, run the checks and write every output.
    Run(RunArgs),
    /// Re-render plots of an output directory from its stored tables.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// List the available checks.
    ListChecks,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only this check (repeatable).
    #[arg(long = "check")]
    checks: Vec<String>,
    /// Also run the negative controls.
    #[arg(long)]
    negative_controls: bool,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut config = load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let exp = config.validate()?;
    let out = args.out.unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let opts = RunOptions {
        out_dir: out.clone(),
        checks: (!args.checks.is_empty()).then_some(args.checks),
        negative_controls: args.negative_controls,
        threads: args.threads,
    };
    let summary = harness::run_experiment(&exp, &opts)?;
    print!("{}", summary.to_text());
    println!("outputs in {}", out.display());
    Ok(ExitCode::from(summary.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::ValidateConfig { config } => load(&config).and_then(|c| {
            let exp = c.validate()?;
            println!("ok: {} ({}-d, {} evaluation pairs), fingerprint {}", c.name, exp.dim, exp.pairs().len(), exp.fingerprint);
            Ok(ExitCode::SUCCESS)
        }),
        Command::Run(args) => run(args),
        Command::Report { out } => harness::rerender(&out).map_err(Into::into).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }),
        Command::ListChecks => {
            for line in harness::list_checks() {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
