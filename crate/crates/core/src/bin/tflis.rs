#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tflis::cli::{run_sweep, run_trace, ScenarioConfig};
use tflis::verify;

const EXIT_INVALID: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "tflis", version, about = "Fixed-lag interval smoothing with knowledge transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOpts {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// MSE of every method across the external-variance grid.
    Sweep(RunOpts),
    /// Per-step mean squared error at one external variance.
    Trace {
        #[command(flatten)]
        opts: RunOpts,
        #[arg(long = "r-e")]
        r_e: f64,
    },
    /// Run the built-in oracle suites.
    Verify,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Sweep(opts) => run(&opts, run_sweep),
        Command::Trace { opts, r_e } => {
            if !(r_e > 0.0) || !r_e.is_finite() {
                eprintln!("error: --r-e must be positive and finite, got {r_e}");
                return ExitCode::from(EXIT_INVALID);
            }
            run(&opts, |s, jobs| run_trace(s, r_e, jobs))
        }
        Command::Verify => {
            let results = verify::run_all();
            for r in &results {
                println!("{}", r.line());
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("summary passed={} failed={failed}", results.len() - failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            }
        }
    }
}

fn run(opts: &RunOpts, job: impl Fn(&tflis::cli::Scenario, Option<usize>) -> tflis::Result<String>) -> ExitCode {
    let scenario = ScenarioConfig::load(&opts.config).and_then(|mut cfg| {
        if let Some(seed) = opts.seed {
            cfg.master_seed = seed;
        }
        cfg.validate()
    });
    let scenario = match scenario {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    let csv = match job(&scenario, opts.jobs) {
        Ok(csv) => csv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    };
    match write_output(opts.out.as_deref(), &csv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: cannot write output: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn write_output(path: Option<&Path>, csv: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
