//! Scenario-driven key-rate sweeps and Monte Carlo coverage runs.

pub mod coverage;
pub mod error;
pub mod scenario;
pub mod sweep;

pub use coverage::{run_coverage, CoverageReport};
pub use error::{CliError, Result};
pub use scenario::{load_scenario, parse_scenario, Scenario};
pub use sweep::{run_sweep, write_csv};

/// Environment variable holding the default thread count.
pub const JOBS_ENV: &str = "LTQKD_JOBS";

/// `flag`, then the scenario's `jobs`, then the environment, then the
/// machine's parallelism.
pub fn resolve_jobs(flag: Option<usize>, scenario: &Scenario) -> Result<usize> {
    if let Some(j) = flag.or(scenario.jobs) {
        return Ok(j);
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(j) if j > 0 => Ok(j),
            _ => Err(CliError::schema(JOBS_ENV, format!("`{v}` is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn read_scenario(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}
