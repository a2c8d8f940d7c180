use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ltqkd_cli::{read_scenario, resolve_jobs, run_coverage, run_sweep, write_csv, Result};

#[derive(Parser)]
#[command(name = "ltqkd", version, about = "Finite-key rates for loss-tolerant QKD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate key rates over the scenario's grid and write CSV.
    Sweep {
        scenario: PathBuf,
        /// Worker threads (default: scenario `jobs`, then LTQKD_JOBS).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// Output file (default: scenario `output`, then stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the failure probability of every bound.
    Coverage {
        scenario: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// CSV file for the report (default: scenario `output`, then stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without computing anything.
    Validate { scenario: PathBuf },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { scenario, jobs, out } => {
            let s = read_scenario(&scenario)?;
            let jobs = resolve_jobs(jobs.map(|j| j as usize), &s)?;
            let rows = run_sweep(&s, jobs)?;
            write_csv(&rows, sink(out.as_deref().or(s.output.as_deref()))?)
        }
        Command::Coverage { scenario, trials, seed, jobs, out } => {
            let s = read_scenario(&scenario)?;
            let jobs = resolve_jobs(jobs.map(|j| j as usize), &s)?;
            let report = run_coverage(&s, trials, seed, jobs)?;
            print!("{}", report.text());
            match out.as_deref().or(s.output.as_deref()) {
                Some(p) => report.write_csv(sink(Some(p))?),
                None => {
                    println!();
                    report.write_csv(io::stdout().lock())
                }
            }
        }
        Command::Validate { scenario } => {
            read_scenario(&scenario)?;
            println!("{}: ok", scenario.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
