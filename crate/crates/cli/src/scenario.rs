//! Scenario files: TOML with a versioned, closed schema.
//!
//! ```toml
//! schema_version = 1
//! protocol = "pm"                      # or "mdi"
//! methods = ["random-sampling", "azuma", "kato"]
//! n_tot = [100000000, 1000000000]
//! output = "rates.csv"                 # optional, `--out` overrides
//! jobs = 4                             # optional, `--jobs` overrides
//! record_timing = false                # wall_time_ms is 0 unless set
//!
//! [loss]                               # either `values` or start/stop/step
//! values = [10.0, 20.0, 30.0]
//!
//! [parameters]                         # all optional, nominal defaults
//! delta = 0.126
//! eps_c = 1e-8
//! eps_s = 1e-8
//! f_ec = 1.16
//! announced = ["psi-"]                 # MDI only
//! prediction_scale = 1.0
//! asymptotic = false
//!
//! [channel]
//! dark_count = 1e-8
//! misalignment = 0.0
//!
//! [selection]                          # optional; absent means optimise
//! p_z_a = 0.8                          # or p_state = [p_0z, p_1z, p_0x]
//! p_z_b = 0.7
//! p_t_given_z = 0.05                   # MDI only
//!
//! [search]                             # optimiser grid
//! lower = 0.005
//! upper = 0.995
//! points = 20
//! refinements = 2
//!
//! [monte_carlo]                        # used by `coverage`
//! trials = 10000
//! seed = 1
//! n_tot = 100000
//! loss_db = 3.0
//! eps = 0.05
//! split_probability = 0.5
//! ```

use std::path::PathBuf;

use ltqkd_core::channel::{ChannelParams, NOMINAL_DARK_COUNT};
use ltqkd_core::config::{MdiSelection, PartySelection, PmSelection, Protocol, ProtocolConfig, Selection};
use ltqkd_core::keyrate::{EstimationMethod, SearchSpace};
use ltqkd_core::qubit::BellOutcome;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Pm,
    Mdi,
}

impl From<ProtocolName> for Protocol {
    fn from(p: ProtocolName) -> Self {
        match p {
            ProtocolName::Pm => Protocol::Pm,
            ProtocolName::Mdi => Protocol::Mdi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    RandomSampling,
    Azuma,
    Kato,
}

impl From<MethodName> for EstimationMethod {
    fn from(m: MethodName) -> Self {
        match m {
            MethodName::RandomSampling => EstimationMethod::RandomSampling,
            MethodName::Azuma => EstimationMethod::Azuma,
            MethodName::Kato => EstimationMethod::Kato,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BellName {
    #[serde(rename = "psi-")]
    PsiMinus,
    #[serde(rename = "psi+")]
    PsiPlus,
    #[serde(rename = "phi-")]
    PhiMinus,
    #[serde(rename = "phi+")]
    PhiPlus,
}

impl From<BellName> for BellOutcome {
    fn from(b: BellName) -> Self {
        match b {
            BellName::PsiMinus => BellOutcome::PsiMinus,
            BellName::PsiPlus => BellOutcome::PsiPlus,
            BellName::PhiMinus => BellOutcome::PhiMinus,
            BellName::PhiPlus => BellOutcome::PhiPlus,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossGrid {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

impl LossGrid {
    /// Loss points in dB, ascending and deduplicated.
    pub fn points(&self) -> Result<Vec<f64>> {
        let mut out = match (&self.values, self.start, self.stop, self.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(start), Some(stop), Some(step)) => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(CliError::schema("loss.step", "must be positive"));
                }
                if !(start.is_finite() && stop.is_finite() && start <= stop) {
                    return Err(CliError::schema("loss.stop", "need finite start <= stop"));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize;
                if count > 100_000 {
                    return Err(CliError::schema("loss.step", "more than 100000 loss points"));
                }
                (0..=count).map(|i| start + step * i as f64).collect()
            }
            _ => {
                return Err(CliError::schema(
                    "loss",
                    "give either `values` or all of `start`, `stop` and `step`",
                ))
            }
        };
        if let Some(bad) = out.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(CliError::schema("loss.values", format!("{bad} is not a finite loss >= 0")));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        Ok(out)
    }
}

fn nominal_delta() -> f64 {
    0.126
}
fn nominal_eps() -> f64 {
    1e-8
}
fn nominal_f() -> f64 {
    1.16
}
fn nominal_announced() -> Vec<BellName> {
    vec![BellName::PsiMinus]
}
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(default = "nominal_delta")]
    pub delta: f64,
    #[serde(default = "nominal_eps")]
    pub eps_c: f64,
    #[serde(default = "nominal_eps")]
    pub eps_s: f64,
    #[serde(default = "nominal_f")]
    pub f_ec: f64,
    #[serde(default = "nominal_announced")]
    pub announced: Vec<BellName>,
    pub omega_weights: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub prediction_scale: f64,
    #[serde(default)]
    pub asymptotic: bool,
}

impl Default for Parameters {
    fn default() -> Self {
        Self {
            delta: nominal_delta(),
            eps_c: nominal_eps(),
            eps_s: nominal_eps(),
            f_ec: nominal_f(),
            announced: nominal_announced(),
            omega_weights: None,
            prediction_scale: 1.0,
            asymptotic: false,
        }
    }
}

fn nominal_dark_count() -> f64 {
    NOMINAL_DARK_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default = "nominal_dark_count")]
    pub dark_count: f64,
    #[serde(default)]
    pub misalignment: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            dark_count: NOMINAL_DARK_COUNT,
            misalignment: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub p_z_a: Option<f64>,
    pub p_state: Option<[f64; 3]>,
    pub p_z_b: Option<f64>,
    pub bob_state: Option<[f64; 3]>,
    pub p_t_given_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_refinements")]
    pub refinements: usize,
}

fn default_lower() -> f64 {
    SearchSpace::default().lower
}
fn default_upper() -> f64 {
    SearchSpace::default().upper
}
fn default_points() -> usize {
    SearchSpace::default().points
}
fn default_refinements() -> usize {
    SearchSpace::default().refinements
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SearchSpace::default();
        Self {
            lower: s.lower,
            upper: s.upper,
            points: s.points,
            refinements: s.refinements,
        }
    }
}

impl From<&SearchSection> for SearchSpace {
    fn from(s: &SearchSection) -> Self {
        SearchSpace {
            lower: s.lower,
            upper: s.upper,
            points: s.points,
            refinements: s.refinements,
        }
    }
}

fn default_trials() -> u64 {
    10_000
}
fn default_seed() -> u64 {
    1
}
fn default_split() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarlo {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n_tot: u64,
    pub loss_db: f64,
    /// Failure probability each checked bound is run at.
    pub eps: f64,
    /// Success probability of the stand-alone sampling-bound check.
    #[serde(default = "default_split")]
    pub split_probability: f64,
}

pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub protocol: ProtocolName,
    pub methods: Vec<MethodName>,
    pub n_tot: Vec<u64>,
    pub loss: LossGrid,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub channel: ChannelSection,
    pub selection: Option<SelectionSection>,
    #[serde(default)]
    pub search: SearchSection,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub record_timing: bool,
    pub monte_carlo: Option<MonteCarlo>,
}

/// Parses without semantic checks.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let s: Scenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    if s.schema_version != SCHEMA_VERSION {
        return Err(CliError::schema(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", s.schema_version),
        ));
    }
    Ok(s)
}

/// Parses and validates.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let s = parse_scenario(text)?;
    s.validate()?;
    Ok(s)
}

fn core_field_key(field: &str) -> String {
    match field {
        "p_state" | "p_0z" | "p_1z" | "p_0x" | "p_z_a" | "p_z_b" | "p_z" | "p_t_given_z" | "alice" | "bob" => {
            format!("selection.{field}")
        }
        "n_tot" => "n_tot".into(),
        "loss_db" => "loss".into(),
        "dark_count" | "misalignment" | "arms" => format!("channel.{field}"),
        "search" => "search".into(),
        _ => format!("parameters.{field}"),
    }
}

/// Maps a core validation error to a schema error naming the scenario key.
pub(crate) fn schema_from_core(e: ltqkd_core::Error) -> CliError {
    match e {
        ltqkd_core::Error::InvalidConfig { field, detail } => CliError::schema(core_field_key(field), detail),
        ltqkd_core::Error::Domain { what, detail } => CliError::schema(core_field_key(what), detail),
        other => CliError::Numerical(other),
    }
}

impl Scenario {
    pub fn protocol(&self) -> Protocol {
        self.protocol.into()
    }

    pub fn methods(&self) -> Vec<EstimationMethod> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m.into_iter().map(Into::into).collect()
    }

    /// Fixed selection, or `None` when the optimiser picks it.
    pub fn fixed_selection(&self) -> Result<Option<Selection>> {
        let Some(sel) = &self.selection else { return Ok(None) };
        let pick = |key: &'static str, p_z: Option<f64>, state: Option<[f64; 3]>| -> Result<[f64; 3]> {
            match (p_z, state) {
                (Some(p), None) => Ok([p / 2.0, p / 2.0, 1.0 - p]),
                (None, Some(s)) => Ok(s),
                _ => Err(CliError::schema(key, "give exactly one of the basis probability or the state vector")),
            }
        };
        let s = match self.protocol {
            ProtocolName::Pm => {
                if sel.bob_state.is_some() || sel.p_t_given_z.is_some() {
                    return Err(CliError::schema("selection", "`bob_state` and `p_t_given_z` are MDI-only"));
                }
                let p_state = pick("selection.p_state", sel.p_z_a, sel.p_state)?;
                let p_z_b = sel
                    .p_z_b
                    .ok_or_else(|| CliError::schema("selection.p_z_b", "missing"))?;
                Selection::Pm(PmSelection::new(p_state, p_z_b).map_err(schema_from_core)?)
            }
            ProtocolName::Mdi => {
                let alice = pick("selection.p_state", sel.p_z_a, sel.p_state)?;
                let bob = pick("selection.bob_state", sel.p_z_b, sel.bob_state)?;
                let p_t_given_z = sel
                    .p_t_given_z
                    .ok_or_else(|| CliError::schema("selection.p_t_given_z", "missing"))?;
                let s = MdiSelection {
                    alice: PartySelection { p_state: alice },
                    bob: PartySelection { p_state: bob },
                    p_t_given_z,
                };
                s.alice.validate("p_state").map_err(schema_from_core)?;
                s.bob.validate("bob_state").map_err(|e| match e {
                    ltqkd_core::Error::InvalidConfig { detail, .. } => CliError::schema("selection.bob_state", detail),
                    other => schema_from_core(other),
                })?;
                s.validate().map_err(schema_from_core)?;
                Selection::Mdi(s)
            }
        };
        Ok(Some(s))
    }

    /// Protocol configuration for one block size. Without a fixed selection
    /// the returned template carries a placeholder for the optimiser.
    pub fn config(&self, n_tot: u64) -> Result<ProtocolConfig> {
        let selection = match self.fixed_selection()? {
            Some(s) => s,
            None => match self.protocol {
                ProtocolName::Pm => Selection::Pm(PmSelection::from_basis(0.5, 0.5).map_err(schema_from_core)?),
                ProtocolName::Mdi => {
                    Selection::Mdi(MdiSelection::from_basis(0.5, 0.5, 0.5).map_err(schema_from_core)?)
                }
            },
        };
        let p = &self.parameters;
        let cfg = ProtocolConfig {
            selection,
            delta: p.delta,
            n_tot,
            eps_c: p.eps_c,
            eps_s: p.eps_s,
            f_ec: p.f_ec,
            announced: p.announced.iter().map(|&b| b.into()).collect(),
            omega_weights: p.omega_weights.clone(),
            prediction_scale: p.prediction_scale,
            asymptotic: p.asymptotic,
        };
        cfg.validate().map_err(schema_from_core)?;
        Ok(cfg)
    }

    pub fn channel(&self, loss_db: f64) -> Result<ChannelParams> {
        let c = ChannelParams {
            loss_db,
            dark_count: self.channel.dark_count,
            misalignment: self.channel.misalignment,
            arms: None,
        };
        c.validate().map_err(schema_from_core)?;
        Ok(c)
    }

    pub fn search_space(&self) -> SearchSpace {
        (&self.search).into()
    }

    /// Semantic checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(CliError::schema("methods", "at least one method is required"));
        }
        if self.n_tot.contains(&0) {
            return Err(CliError::schema("n_tot", "block sizes must be at least 1"));
        }
        if self.protocol == ProtocolName::Mdi {
            if let Some(b) = self.parameters.announced.iter().find(|b| matches!(b, BellName::PhiMinus | BellName::PhiPlus)) {
                return Err(CliError::schema(
                    "parameters.announced",
                    format!("{b:?} is not supported by the relay model; use psi- or psi+"),
                ));
            }
        }
        if self.jobs == Some(0) {
            return Err(CliError::schema("jobs", "must be at least 1"));
        }
        self.loss.points()?;
        self.search_space().validate().map_err(schema_from_core)?;
        self.config(1)?;
        self.channel(0.0)?;
        if let Some(mc) = &self.monte_carlo {
            validate_monte_carlo(mc)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_monte_carlo(mc: &MonteCarlo) -> Result<()> {
    if mc.trials < MIN_TRIALS {
        return Err(CliError::schema(
            "monte_carlo.trials",
            format!("{} is below the minimum of {MIN_TRIALS}", mc.trials),
        ));
    }
    if mc.n_tot == 0 {
        return Err(CliError::schema("monte_carlo.n_tot", "must be at least 1"));
    }
    if !(mc.loss_db.is_finite() && mc.loss_db >= 0.0) {
        return Err(CliError::schema("monte_carlo.loss_db", "must be finite and >= 0"));
    }
    if !(mc.eps > 0.0 && mc.eps < 0.25) {
        return Err(CliError::schema("monte_carlo.eps", format!("{} must lie in (0, 0.25)", mc.eps)));
    }
    if !(mc.split_probability > 0.0 && mc.split_probability < 1.0) {
        return Err(CliError::schema("monte_carlo.split_probability", "must lie in (0, 1)"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
protocol = "mdi"
methods = ["kato"]
n_tot = [1000]
[loss]
values = []
"#;

    fn key_of(e: CliError) -> String {
        match e {
            CliError::Schema { key, .. } => key,
            other => panic!("expected a schema error, got {other}"),
        }
    }

    #[test]
    fn defaults_fill_nominal_values() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.parameters, Parameters::default());
        assert_eq!(s.channel.dark_count, 1e-8);
        assert!(s.loss.points().unwrap().is_empty());
        assert!(s.fixed_selection().unwrap().is_none());
    }

    #[test]
    fn loss_range_is_inclusive() {
        let g = LossGrid {
            start: Some(0.0),
            stop: Some(1.0),
            step: Some(0.1),
            ..LossGrid::default()
        };
        let p = g.points().unwrap();
        assert_eq!(p.len(), 11);
        assert!((p[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_loss_forms_rejected() {
        let g = LossGrid {
            values: Some(vec![1.0]),
            step: Some(1.0),
            ..LossGrid::default()
        };
        assert_eq!(key_of(g.points().unwrap_err()), "loss");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = MINIMAL.replace("[loss]", "colour = 1\n[loss]");
        assert!(matches!(parse_scenario(&text), Err(CliError::Parse(_))));
        let text = MINIMAL.replace("values = []", "values = []\nspan = 3");
        assert!(matches!(parse_scenario(&text), Err(CliError::Parse(_))));
    }

    #[test]
    fn version_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert_eq!(key_of(parse_scenario(&text).unwrap_err()), "schema_version");
    }

    #[test]
    fn bad_probabilities_name_their_key() {
        let pm = r#"
schema_version = 1
protocol = "pm"
methods = ["azuma"]
n_tot = [1000]
[loss]
values = [1.0]
[selection]
p_state = [0.4, 0.4, 0.3]
p_z_b = 0.5
"#;
        assert_eq!(key_of(load_scenario(pm).unwrap_err()), "selection.p_state");
        let text = pm.replace("p_state = [0.4, 0.4, 0.3]\np_z_b = 0.5", "p_z_a = 0.5\np_z_b = 1.5");
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "selection.p_z_b");
        let text = MINIMAL.to_string() + "[selection]\np_z_a = 0.5\np_z_b = 0.5\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "selection.p_t_given_z");
        let text = MINIMAL.to_string() + "[parameters]\neps_s = 2.0\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "parameters.eps_s");
        let text = MINIMAL.to_string() + "[channel]\ndark_count = 1.5\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "channel.dark_count");
    }

    #[test]
    fn phi_outcomes_rejected_for_relay() {
        let text = MINIMAL.to_string() + "[parameters]\nannounced = [\"phi+\"]\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "parameters.announced");
    }

    #[test]
    fn monte_carlo_limits() {
        let text = MINIMAL.to_string() + "[monte_carlo]\ntrials = 50\nn_tot = 10\nloss_db = 1.0\neps = 0.05\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "monte_carlo.trials");
        let text = MINIMAL.to_string() + "[monte_carlo]\nn_tot = 10\nloss_db = 1.0\neps = 0.5\n";
        assert_eq!(key_of(load_scenario(&text).unwrap_err()), "monte_carlo.eps");
    }

    #[test]
    fn round_trips_through_toml() {
        let s = load_scenario(MINIMAL).unwrap();
        let text = toml::to_string(&s).unwrap();
        assert_eq!(load_scenario(&text).unwrap(), s);
    }
}
