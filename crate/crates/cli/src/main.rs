//! `mfs`: sequential mixed-frequency nowcasting from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for data
//! errors (missing observations, misaligned series, out-of-range requests),
//! 4 for numerical failures inside the estimation machinery.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfs_cli::config::{load_config, Overrides};
use mfs_cli::pipeline::{execute, Stage};
use mfs_cli::scenario::{load_scenario, run_synthetic};
use mfs_core::MfsError;

#[derive(Debug, Parser)]
#[command(
    name = "mfs",
    version,
    about = "Sequential nowcasts of a low-frequency target from monthly indicators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed override.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Monthly lead override; repeat the flag for several leads.
    #[arg(long = "lead", value_name = "L")]
    lead: Vec<usize>,
    /// Output directory override.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Retained posterior draws per refit.
    #[arg(long, value_name = "N")]
    iters: Option<usize>,
    /// Discarded warm-up iterations per refit.
    #[arg(long, value_name = "N")]
    burnin: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            leads: self.lead.clone(),
            out: self.out.clone(),
            iters: self.iters,
            burnin: self.burnin,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in scenario name (smooth, regime-shift, noiseless) or a
    /// scenario file path.
    scenario: String,
    /// Generator and pipeline seed.
    #[arg(long, value_name = "N", default_value_t = 1)]
    seed: u64,
    /// Output directory (default: ./synthetic_<scenario>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Monthly lead override; repeat the flag for several leads.
    #[arg(long = "lead", value_name = "L")]
    lead: Vec<usize>,
    /// Retained posterior draws per refit.
    #[arg(long, value_name = "N")]
    iters: Option<usize>,
    /// Discarded warm-up iterations per refit.
    #[arg(long, value_name = "N")]
    burnin: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate the input panel and echo it to the output directory.
    Ingest(CommonArgs),
    /// Ingest, then filter each indicator onto the target grid.
    Project(CommonArgs),
    /// Project, then produce sequential nowcasts and baselines.
    Nowcast(CommonArgs),
    /// Nowcast, then write metric trajectories and the run summary.
    Evaluate(CommonArgs),
    /// The whole pipeline in one pass.
    Run(CommonArgs),
    /// Draw a synthetic panel, run the pipeline, and audit against truth.
    Simulate(SimulateArgs),
}

/// Coarse failure class and process exit code for an error.
fn classify(error: &MfsError) -> (&'static str, u8) {
    match error {
        MfsError::Validation(_) => ("config", 2),
        MfsError::Gap { .. }
        | MfsError::Ordering { .. }
        | MfsError::Alignment(_)
        | MfsError::Boundary(_)
        | MfsError::Io(_)
        | MfsError::Csv(_) => ("data", 3),
        MfsError::Degeneracy(_) | MfsError::Singular(_) | MfsError::NonFinite { .. } => {
            ("numeric", 4)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), MfsError> {
    let staged = |args: &CommonArgs, stage: Stage| -> Result<(), MfsError> {
        let cfg = load_config(&args.config, &args.overrides())?;
        execute(&cfg, stage)
    };
    match &cli.command {
        Command::Ingest(args) => staged(args, Stage::Ingest),
        Command::Project(args) => staged(args, Stage::Project),
        Command::Nowcast(args) => staged(args, Stage::Nowcast),
        Command::Evaluate(args) => staged(args, Stage::Evaluate),
        Command::Run(args) => staged(args, Stage::Full),
        Command::Simulate(args) => {
            let spec = load_scenario(&args.scenario)?;
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("synthetic_{}", spec.name)));
            let overrides = Overrides {
                seed: Some(args.seed),
                leads: args.lead.clone(),
                out: None,
                iters: args.iters,
                burnin: args.burnin,
            };
            run_synthetic(&spec, &out, &overrides).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let (kind, code) = classify(&error);
            eprintln!("error kind={kind} message=\"{error}\"");
            ExitCode::from(code)
        }
    }
}
