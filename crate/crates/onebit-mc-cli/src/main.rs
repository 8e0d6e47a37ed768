//! Experiment driver for one-bit matrix completion under differential
//! privacy. Runs mechanism-by-budget sweeps on synthetic or real rating
//! data, writes one CSV row per cell, and aggregates results into
//! plot-ready series.

mod config;
mod runner;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use onebit_mc::{Error, Result};

use config::{PlotArgs, RealArgs, SweepArgs, SynthArgs};

#[derive(Parser)]
#[command(
    name = "onebit-mc",
    version,
    about = "One-bit matrix completion experiments under differential privacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic recovery sweep: mechanisms x privacy budgets, ARE per cell
    Synth(SynthArgs),
    /// Real-data prediction sweep (ml-100k or rc), sign accuracy per cell
    Real(RealArgs),
    /// Synthetic sweep over observation ratios
    SweepRatio(SweepArgs),
    /// Aggregate a result CSV into per-figure mean/std series
    Plotdata(PlotArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => run_sweep(config::synth_plan(&args)?),
        Command::Real(args) => run_sweep(config::real_plan(&args)?),
        Command::SweepRatio(args) => run_sweep(config::sweep_plan(&args)?),
        Command::Plotdata(args) => {
            let written = runner::plotdata(&args.input, &args.out_dir)?;
            for path in written {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn run_sweep(plan: config::Plan) -> Result<()> {
    let rows = runner::execute(&plan)?;
    runner::write_rows(&plan.out, &rows)?;
    println!("{} rows -> {}", rows.len(), plan.out.display());
    Ok(())
}

/// 2 for configuration problems, 3 for data problems, 4 for numerical
/// failures; success is 0 and clap's own usage errors also exit 2.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Dimension(_) => 2,
        Error::Data { .. } | Error::Io(_) => 3,
        Error::Numerical(_) => 4,
    }
}
