use std::fmt::Write as _;
use std::io::Write;

use ltqkd_core::channel::{mdi_sample, pm_sample, seeded_rng};
use ltqkd_core::config::Selection;
use ltqkd_core::keyrate::{expected_counts, phase_error_bound, Counts, Decomposed};
use ltqkd_core::mdi::mdi_tagging;
use ltqkd_core::pm::pm_tagging;
use ltqkd_core::sampling::{g_lower, g_upper};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::scenario::{validate_monte_carlo, MonteCarlo, Scenario};

const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if p == 1.0 { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub bound: String,
    pub nominal_eps: f64,
    pub trials: u64,
    pub violations: u64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `eps + 3 sigma` acceptance limit.
    pub limit: f64,
    pub pass: bool,
}

impl CoverageRow {
    fn new(bound: String, eps: f64, trials: u64, violations: u64) -> Self {
        let fraction = violations as f64 / trials as f64;
        let (wilson_low, wilson_high) = wilson_interval(violations, trials);
        let limit = eps + 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt();
        Self {
            bound,
            nominal_eps: eps,
            trials,
            violations,
            fraction,
            wilson_low,
            wilson_high,
            limit,
            pass: fraction <= limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub protocol: &'static str,
    pub seed: u64,
    pub n_tot: u64,
    pub loss_db: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "coverage: protocol {} N_tot {} loss {} dB seed {}",
            self.protocol, self.n_tot, self.loss_db, self.seed
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} eps {:<8} violations {:>6}/{:<6} rate {:.5} wilson95 [{:.5}, {:.5}] limit {:.5} {}",
                r.bound,
                r.nominal_eps,
                r.violations,
                r.trials,
                r.fraction,
                r.wilson_low,
                r.wilson_high,
                r.limit,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "bound", "nominal_eps", "trials", "violations", "fraction", "wilson_low", "wilson_high",
                "limit", "pass",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Monte Carlo coverage of the phase-error bound of every configured method
/// and of the two sampling bounds, each run at `monte_carlo.eps`.
/// Trial `i` draws from stream `i` of the seeded generator, so the report
/// does not depend on the thread count.
pub fn run_coverage(scenario: &Scenario, trials: Option<u64>, seed: Option<u64>, jobs: usize) -> Result<CoverageReport> {
    scenario.validate()?;
    let mut mc: MonteCarlo = scenario
        .monte_carlo
        .clone()
        .ok_or_else(|| CliError::schema("monte_carlo", "section required for coverage"))?;
    if let Some(t) = trials {
        mc.trials = t;
    }
    if let Some(s) = seed {
        mc.seed = s;
    }
    validate_monte_carlo(&mc)?;
    if scenario.fixed_selection()?.is_none() {
        return Err(CliError::schema("selection", "coverage needs a fixed selection"));
    }

    let mut cfg = scenario.config(mc.n_tot)?;
    cfg.asymptotic = false;
    cfg.eps_s = 2.0 * mc.eps.sqrt();
    let channel = scenario.channel(mc.loss_db)?;
    let decomposed = Decomposed::new(scenario.protocol(), cfg.delta)?;
    let (expected, _) = expected_counts(&cfg, &decomposed, &channel)?;
    let methods = scenario.methods();
    let split = Binomial::new(mc.n_tot, 1.0 - mc.split_probability)
        .map_err(|e| CliError::schema("monte_carlo.split_probability", e.to_string()))?;

    enum Sampler {
        Pm(ltqkd_core::pm::PmTagging),
        Mdi(ltqkd_core::mdi::MdiTagging),
    }
    let sampler = match (&cfg.selection, &decomposed) {
        (Selection::Pm(sel), Decomposed::Pm(party)) => Sampler::Pm(pm_tagging(sel, party)?),
        (Selection::Mdi(sel), Decomposed::Mdi { alice, bob }) => {
            Sampler::Mdi(mdi_tagging(sel, alice, bob, &cfg.announced)?)
        }
        _ => unreachable!("decomposition built for the configured protocol"),
    };

    let one_trial = |i: u64| -> Result<Vec<bool>> {
        let mut rng = seeded_rng(mc.seed);
        rng.set_stream(i);
        let (observed, n_ph) = match (&sampler, &decomposed) {
            (Sampler::Pm(t), Decomposed::Pm(party)) => {
                let s = pm_sample(t, party, &channel, mc.n_tot, &mut rng);
                (Counts::Pm(s.counts()), s.n_phase_errors)
            }
            (Sampler::Mdi(t), Decomposed::Mdi { alice, bob }) => {
                let s = mdi_sample(t, alice, bob, &channel, mc.n_tot, &mut rng)?;
                (Counts::Mdi(s.counts()), s.n_phase_errors)
            }
            _ => unreachable!(),
        };
        let n_ph = n_ph.unwrap_or(0) as f64;
        let mut out = Vec::with_capacity(methods.len() + 2);
        for &m in &methods {
            let (bound, _) = phase_error_bound(&cfg, &decomposed, &observed, &expected, m)?;
            out.push(n_ph > bound);
        }
        let k2 = split.sample(&mut rng);
        let k1 = (mc.n_tot - k2) as f64;
        out.push(k1 > g_upper(k2, mc.split_probability, mc.eps)?);
        out.push(k1 < g_lower(k2, mc.split_probability, mc.eps)?);
        Ok(out)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Write(e.to_string()))?;
    let outcomes: Vec<Vec<bool>> = pool.install(|| (0..mc.trials).into_par_iter().map(one_trial).collect::<Result<_>>())?;

    let mut names: Vec<String> = methods.iter().map(|m| m.name().to_string()).collect();
    names.push("g_upper".into());
    names.push("g_lower".into());
    let rows = names
        .into_iter()
        .enumerate()
        .map(|(j, name)| {
            let v = outcomes.iter().filter(|o| o[j]).count() as u64;
            CoverageRow::new(name, mc.eps, mc.trials, v)
        })
        .collect();
    Ok(CoverageReport {
        protocol: scenario.protocol().name(),
        seed: mc.seed,
        n_tot: mc.n_tot,
        loss_db: mc.loss_db,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference() {
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.05522854).abs() < 1e-6, "{lo}");
        assert!((hi - 0.17436566).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.005);
    }
}
