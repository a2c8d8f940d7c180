use std::io::Write;
use std::time::Instant;

use ltqkd_core::config::Selection;
use ltqkd_core::keyrate::{compute_rate_with, optimize_rate, Decomposed, EstimationMethod, KeyRateResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::scenario::Scenario;

pub const CSV_HEADER: [&str; 12] = [
    "protocol",
    "method",
    "n_tot",
    "loss_db",
    "rate",
    "key_length",
    "n_sifted",
    "n_ph_upper",
    "p_z_a",
    "p_z_b",
    "p_t_given_z",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub protocol: &'static str,
    pub method: &'static str,
    pub n_tot: u64,
    pub loss_db: f64,
    pub rate: f64,
    pub key_length: f64,
    pub n_sifted: f64,
    pub n_ph_upper: f64,
    pub p_z_a: f64,
    pub p_z_b: f64,
    pub p_t_given_z: Option<f64>,
    pub wall_time_ms: u64,
}

impl SweepRow {
    fn new(r: &KeyRateResult, loss_db: f64, wall_time_ms: u64) -> Self {
        let (p_z_a, p_z_b, p_t_given_z) = match &r.selection {
            Selection::Pm(s) => (s.p_z_a(), s.p_z_b, None),
            Selection::Mdi(s) => (s.alice.p_z(), s.bob.p_z(), Some(s.p_t_given_z)),
        };
        Self {
            protocol: r.protocol.name(),
            method: r.method.name(),
            n_tot: r.n_tot,
            loss_db,
            rate: r.rate,
            key_length: r.key_length,
            n_sifted: r.n_sifted,
            n_ph_upper: r.n_ph_upper,
            p_z_a,
            p_z_b,
            p_t_given_z,
            wall_time_ms,
        }
    }
}

/// Evaluates every (method, block size, loss) point on up to `jobs` threads.
/// Rows come back sorted by method, block size and loss.
pub fn run_sweep(scenario: &Scenario, jobs: usize) -> Result<Vec<SweepRow>> {
    scenario.validate()?;
    let losses = scenario.loss.points()?;
    let mut sizes = scenario.n_tot.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let fixed = scenario.fixed_selection()?;
    let decomposed = Decomposed::new(scenario.protocol(), scenario.parameters.delta)?;
    let search = scenario.search_space();

    let mut points: Vec<(EstimationMethod, u64, f64)> = Vec::new();
    for m in scenario.methods() {
        for &n in &sizes {
            for &l in &losses {
                points.push((m, n, l));
            }
        }
    }

    let eval = |&(method, n_tot, loss): &(EstimationMethod, u64, f64)| -> Result<SweepRow> {
        let start = Instant::now();
        let cfg = scenario.config(n_tot)?;
        let channel = scenario.channel(loss)?;
        let r = match fixed {
            Some(_) => compute_rate_with(&cfg, &decomposed, &channel, method)?,
            None => optimize_rate(&cfg, &channel, method, &search)?,
        };
        let ms = if scenario.record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        Ok(SweepRow::new(&r, loss, ms))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Write(e.to_string()))?;
    pool.install(|| points.par_iter().map(eval).collect())
}

/// Writes the header and rows; an empty sweep gives a header-only file.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    const SMALL: &str = r#"
schema_version = 1
protocol = "pm"
methods = ["azuma", "random-sampling"]
n_tot = [1000000000, 100000000]
[loss]
values = [20.0, 10.0]
[selection]
p_z_a = 0.8
p_z_b = 0.8
"#;

    #[test]
    fn rows_are_sorted_and_complete() {
        let s = load_scenario(SMALL).unwrap();
        let rows = run_sweep(&s, 2).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].method, "random-sampling");
        assert_eq!((rows[0].n_tot, rows[0].loss_db), (100_000_000, 10.0));
        assert_eq!((rows[1].n_tot, rows[1].loss_db), (100_000_000, 20.0));
        assert_eq!(rows[4].method, "azuma");
        assert!(rows.iter().all(|r| r.wall_time_ms == 0));
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let s = load_scenario(SMALL).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&run_sweep(&s, 1).unwrap(), &mut a).unwrap();
        write_csv(&run_sweep(&s, 4).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn header_only_for_no_rows() {
        let mut out = Vec::new();
        write_csv(&[], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), CSV_HEADER.join(","));
    }
}
