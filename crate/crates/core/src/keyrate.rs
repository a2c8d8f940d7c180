//! Secret-key length and rate: channel expectations, phase-error bound by
//! the chosen method, error-correction leakage and privacy amplification.

use crate::channel::{mdi_expected_counts, pm_expected_counts, ChannelParams};
use crate::concentration::{phase_errors_azuma, phase_errors_kato};
use crate::config::{
    mdi_states_alice, mdi_states_bob, pm_states, MdiSelection, PmSelection, Protocol,
    ProtocolConfig, Selection,
};
use crate::error::{domain, Result};
use crate::mdi::{mdi_phase_error_bound, mdi_phase_error_bound_each, mdi_reweighted_sums, mdi_tagging, MdiCounts};
use crate::pm::{pm_phase_error_bound, pm_phase_error_bound_each, pm_reweighted_sums, pm_tagging, PmCounts};
use crate::qubit::PartyDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimationMethod {
    RandomSampling,
    Azuma,
    Kato,
}

impl EstimationMethod {
    pub const ALL: [Self; 3] = [Self::RandomSampling, Self::Azuma, Self::Kato];

    pub fn name(self) -> &'static str {
        match self {
            Self::RandomSampling => "random-sampling",
            Self::Azuma => "azuma",
            Self::Kato => "kato",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Binary entropy in bits; `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain("binary_entropy", format!("{x} is not in [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBudget {
    /// Phase-error estimation failure probability.
    pub eps: f64,
    /// Privacy-amplification smoothing term.
    pub xi: f64,
    pub eps_sec: f64,
}

/// `eps = xi = eps_s^2 / 4` and `eps_sec = eps_c + eps_s`.
pub fn epsilon_budget(eps_s: f64, eps_c: f64) -> Result<EpsilonBudget> {
    for (name, e) in [("eps_s", eps_s), ("eps_c", eps_c)] {
        if !(e > 0.0 && e < 1.0) {
            return Err(domain(name, format!("{e} must lie in (0, 1)")));
        }
    }
    let e = eps_s * eps_s / 4.0;
    Ok(EpsilonBudget {
        eps: e,
        xi: e,
        eps_sec: eps_c + eps_s,
    })
}

/// `N_s (1 - h(N_ph / N_s)) - lambda_EC - log2(1/eps_c) - log2(1/xi)`,
/// with the ratio clamped to `[0, 1/2]` and the result clamped at zero.
pub fn secret_key_length(n_s: f64, n_ph_upper: f64, lambda_ec: f64, eps_c: f64, xi: f64) -> f64 {
    if !(n_s > 0.0) {
        return 0.0;
    }
    let ratio = (n_ph_upper / n_s).clamp(0.0, 0.5);
    let h = binary_entropy(ratio).unwrap_or(1.0);
    let k = n_s * (1.0 - h) - lambda_ec - (1.0 / eps_c).log2() - (1.0 / xi).log2();
    k.max(0.0)
}

/// Diagnostics for one evaluated setting.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateResult {
    pub protocol: Protocol,
    pub method: EstimationMethod,
    pub selection: Selection,
    pub n_tot: u64,
    pub key_length: f64,
    /// Key bits per emitted round.
    pub rate: f64,
    pub n_sifted: f64,
    pub n_ph_upper: f64,
    /// Expected phase errors from the channel model.
    pub n_ph_true: f64,
    pub e_z: f64,
    pub lambda_ec: f64,
    /// Failure probability spent on phase-error estimation.
    pub eps_estimation: f64,
}

impl KeyRateResult {
    fn zero(config: &ProtocolConfig, method: EstimationMethod) -> Self {
        Self {
            protocol: config.protocol(),
            method,
            selection: config.selection,
            n_tot: config.n_tot,
            key_length: 0.0,
            rate: 0.0,
            n_sifted: 0.0,
            n_ph_upper: 0.0,
            n_ph_true: 0.0,
            e_z: 0.0,
            lambda_ec: 0.0,
            eps_estimation: 0.0,
        }
    }
}

/// Phase-error estimate with the quantities it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseErrorReport {
    pub n_ph_upper: f64,
    pub n_ph_true: f64,
    pub n_sifted: f64,
    pub n_bit_errors: f64,
    pub eps_estimation: f64,
}

impl PhaseErrorReport {
    pub fn upper_rate(&self) -> f64 {
        self.n_ph_upper / self.n_sifted
    }

    pub fn true_rate(&self) -> f64 {
        self.n_ph_true / self.n_sifted
    }
}

/// Decompositions for one flaw magnitude, reusable across selections.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Decomposed {
    Pm(PartyDecomposition),
    Mdi {
        alice: PartyDecomposition,
        bob: PartyDecomposition,
    },
}

impl Decomposed {
    pub fn new(protocol: Protocol, delta: f64) -> Result<Self> {
        Ok(match protocol {
            Protocol::Pm => Self::Pm(PartyDecomposition::new(pm_states(delta))?),
            Protocol::Mdi => Self::Mdi {
                alice: PartyDecomposition::new(mdi_states_alice(delta))?,
                bob: PartyDecomposition::new(mdi_states_bob(delta))?,
            },
        })
    }
}

fn scaled_pm(c: &PmCounts, k: f64) -> PmCounts {
    PmCounts {
        n_tag: c.n_tag.map(|r| r.map(|x| x * k)),
        n_test: c.n_test.map(|r| r.map(|x| x * k)),
        ..*c
    }
}

fn scaled_mdi(c: &MdiCounts, k: f64) -> MdiCounts {
    let mut out = c.clone();
    for o in &mut out.omegas {
        o.n_pos *= k;
        o.n_neg *= k;
        o.n_test = o.n_test.map(|x| x * k);
    }
    out
}

/// Failure probability handed to one estimator call.
fn estimation_eps(config: &ProtocolConfig, method: EstimationMethod) -> Result<f64> {
    if config.asymptotic {
        return Ok(1.0);
    }
    let eps = epsilon_budget(config.eps_s, config.eps_c)?.eps;
    let per_application = match (config.protocol(), method) {
        (_, EstimationMethod::RandomSampling) => 1.0,
        (Protocol::Pm, _) => 8.0,
        (Protocol::Mdi, _) => 9.0 * config.announced.len() as f64,
    };
    Ok(eps / per_application)
}

/// Observed or expected counts for either protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum Counts {
    Pm(PmCounts),
    Mdi(MdiCounts),
}

/// Phase-error upper bound by `method` on `observed`, with Kato predictions
/// taken from `expected` scaled by the configured prediction scale.
/// Returns the bound and the failure probability it spends.
pub fn phase_error_bound(
    config: &ProtocolConfig,
    decomposed: &Decomposed,
    observed: &Counts,
    expected: &Counts,
    method: EstimationMethod,
) -> Result<(f64, f64)> {
    let e = estimation_eps(config, method)?;
    let k = config.prediction_scale;
    match (&config.selection, decomposed, observed, expected) {
        (Selection::Pm(sel), Decomposed::Pm(party), Counts::Pm(counts), Counts::Pm(exp)) => {
            let tagging = pm_tagging(sel, party)?;
            match method {
                EstimationMethod::RandomSampling if config.asymptotic => {
                    Ok((pm_phase_error_bound_each(counts, &tagging, 1.0)?, 1.0))
                }
                EstimationMethod::RandomSampling => Ok((pm_phase_error_bound(counts, &tagging, e)?, e)),
                EstimationMethod::Azuma => phase_errors_azuma(&pm_reweighted_sums(counts, exp, &tagging)?, e),
                EstimationMethod::Kato => {
                    let sums = pm_reweighted_sums(counts, &scaled_pm(exp, k), &tagging)?;
                    phase_errors_kato(&sums, e)
                }
            }
        }
        (
            Selection::Mdi(sel),
            Decomposed::Mdi { alice, bob },
            Counts::Mdi(counts),
            Counts::Mdi(exp),
        ) => {
            let tagging = mdi_tagging(sel, alice, bob, &config.announced)?;
            match method {
                EstimationMethod::RandomSampling if config.asymptotic => {
                    let ones = vec![1.0; tagging.omegas.len()];
                    Ok((mdi_phase_error_bound_each(counts, &tagging, &ones)?, 1.0))
                }
                EstimationMethod::RandomSampling => {
                    let shares: Vec<f64> = config.omega_shares().iter().map(|s| s * e).collect();
                    Ok((mdi_phase_error_bound(counts, &tagging, &shares)?, e))
                }
                EstimationMethod::Azuma => phase_errors_azuma(&mdi_reweighted_sums(counts, exp, &tagging)?, e),
                EstimationMethod::Kato => {
                    let sums = mdi_reweighted_sums(counts, &scaled_mdi(exp, k), &tagging)?;
                    phase_errors_kato(&sums, e)
                }
            }
        }
        _ => Err(domain("phase_error_bound", "counts or decomposition do not match the protocol")),
    }
}

/// Expected counts of `config` on `channel` and the expected phase errors.
pub fn expected_counts(
    config: &ProtocolConfig,
    decomposed: &Decomposed,
    channel: &ChannelParams,
) -> Result<(Counts, f64)> {
    let n_tot = config.n_tot as f64;
    match (&config.selection, decomposed) {
        (Selection::Pm(sel), Decomposed::Pm(party)) => {
            let tagging = pm_tagging(sel, party)?;
            let exp = pm_expected_counts(&tagging, party, channel, n_tot);
            Ok((Counts::Pm(exp.counts), exp.n_phase_errors))
        }
        (Selection::Mdi(sel), Decomposed::Mdi { alice, bob }) => {
            let tagging = mdi_tagging(sel, alice, bob, &config.announced)?;
            let exp = mdi_expected_counts(&tagging, alice, bob, channel, n_tot)?;
            Ok((Counts::Mdi(exp.counts), exp.n_phase_errors))
        }
        _ => Err(domain("expected_counts", "decomposition does not match the protocol")),
    }
}

/// Phase-error bound for the expected counts of `config` on `channel`.
pub fn estimate_phase_errors(
    config: &ProtocolConfig,
    decomposed: &Decomposed,
    channel: &ChannelParams,
    method: EstimationMethod,
) -> Result<PhaseErrorReport> {
    config.validate()?;
    channel.validate()?;
    let (counts, n_ph_true) = expected_counts(config, decomposed, channel)?;
    let (n_ph_upper, eps_estimation) = phase_error_bound(config, decomposed, &counts, &counts, method)?;
    let (n_sifted, n_bit_errors) = match &counts {
        Counts::Pm(c) => (c.n_sifted, c.n_bit_errors),
        Counts::Mdi(c) => (c.n_sifted, c.n_bit_errors),
    };
    Ok(PhaseErrorReport {
        n_ph_upper,
        n_ph_true,
        n_sifted,
        n_bit_errors,
        eps_estimation,
    })
}

/// Rate for one setting with precomputed decompositions.
pub fn compute_rate_with(
    config: &ProtocolConfig,
    decomposed: &Decomposed,
    channel: &ChannelParams,
    method: EstimationMethod,
) -> Result<KeyRateResult> {
    let report = estimate_phase_errors(config, decomposed, channel, method)?;
    let budget = epsilon_budget(config.eps_s, config.eps_c)?;
    let n_s = report.n_sifted;
    let e_z = if n_s > 0.0 { report.n_bit_errors / n_s } else { 0.0 };
    let lambda_ec = n_s * config.f_ec * binary_entropy(e_z.min(1.0))?;
    let key_length = secret_key_length(n_s, report.n_ph_upper, lambda_ec, config.eps_c, budget.xi);
    Ok(KeyRateResult {
        key_length,
        rate: key_length / config.n_tot as f64,
        n_sifted: n_s,
        n_ph_upper: report.n_ph_upper,
        n_ph_true: report.n_ph_true,
        e_z,
        lambda_ec,
        eps_estimation: report.eps_estimation,
        ..KeyRateResult::zero(config, method)
    })
}

pub fn compute_rate(
    config: &ProtocolConfig,
    channel: &ChannelParams,
    method: EstimationMethod,
) -> Result<KeyRateResult> {
    let d = Decomposed::new(config.protocol(), config.delta)?;
    compute_rate_with(config, &d, channel, method)
}

/// Nested-grid search bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub refinements: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lower: 0.005,
            upper: 0.995,
            points: 20,
            refinements: 2,
        }
    }
}

const PROBABILITY_FLOOR: f64 = 1e-4;

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lower && self.lower < self.upper && self.upper < 1.0) {
            return Err(domain(
                "search",
                format!("bounds [{}, {}] must satisfy 0 < lower < upper < 1", self.lower, self.upper),
            ));
        }
        if self.points < 2 {
            return Err(domain("search", "need at least two grid points"));
        }
        Ok(())
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn selection_from(protocol: Protocol, x: &[f64]) -> Result<Selection> {
    Ok(match protocol {
        Protocol::Pm => Selection::Pm(PmSelection::from_basis(x[0], x[1])?),
        Protocol::Mdi => Selection::Mdi(MdiSelection::from_basis(x[0], x[1], x[2])?),
    })
}

/// Optimises the basis probabilities (and the test fraction of key pairs
/// for MDI) on a nested grid. Settings whose estimate fails count as zero
/// rate. Returns a zero-rate result if nothing is positive.
pub fn optimize_rate(
    template: &ProtocolConfig,
    channel: &ChannelParams,
    method: EstimationMethod,
    search: &SearchSpace,
) -> Result<KeyRateResult> {
    search.validate()?;
    template.validate()?;
    channel.validate()?;
    let protocol = template.protocol();
    let dims = match protocol {
        Protocol::Pm => 2,
        Protocol::Mdi => 3,
    };
    let decomposed = Decomposed::new(protocol, template.delta)?;
    let evaluate = |x: &[f64]| -> Option<KeyRateResult> {
        let mut cfg = template.clone();
        cfg.selection = selection_from(protocol, x).ok()?;
        compute_rate_with(&cfg, &decomposed, channel, method).ok()
    };

    let mut best: Option<(Vec<f64>, KeyRateResult)> = None;
    let mut ranges = vec![(search.lower, search.upper); dims];
    for _ in 0..=search.refinements {
        let axes: Vec<Vec<f64>> = ranges
            .iter()
            .map(|&(lo, hi)| grid(lo, hi, search.points))
            .collect();
        let mut idx = vec![0usize; dims];
        loop {
            let x: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
            if let Some(r) = evaluate(&x) {
                let better = match &best {
                    None => true,
                    Some((_, b)) => r.key_length > b.key_length,
                };
                if better {
                    best = Some((x, r));
                }
            }
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] < search.points {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        let Some((x, _)) = &best else { break };
        ranges = x
            .iter()
            .zip(&ranges)
            .map(|(&c, &(lo, hi))| {
                let step = (hi - lo) / (search.points - 1) as f64;
                (
                    (c - step).max(PROBABILITY_FLOOR),
                    (c + step).min(1.0 - PROBABILITY_FLOOR),
                )
            })
            .collect();
    }
    Ok(match best {
        Some((_, r)) if r.key_length > 0.0 => r,
        Some((_, r)) => KeyRateResult {
            key_length: 0.0,
            rate: 0.0,
            ..r
        },
        None => KeyRateResult::zero(template, method),
    })
}
