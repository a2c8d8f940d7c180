//! Protocol configuration: selection probabilities, security targets and
//! the nominal imperfectly-encoded states.

use std::f64::consts::PI;

use crate::error::{check_probability, invalid, Result};
use crate::qubit::{BellOutcome, QubitState};

/// Tolerance on probability groups summing to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// `kappa = 1 + delta / pi`.
pub fn kappa(delta: f64) -> f64 {
    1.0 + delta / PI
}

/// P&M states `[0_Z, 1_Z, 0_X]` with encoded angles `(0, kappa pi/2, kappa pi/4)`.
pub fn pm_states(delta: f64) -> [QubitState; 3] {
    let k = kappa(delta);
    [0.0, k * PI / 2.0, k * PI / 4.0].map(QubitState::planar)
}

/// MDI sender-A states `[0, 1, tau]`; identical to the P&M set.
pub fn mdi_states_alice(delta: f64) -> [QubitState; 3] {
    pm_states(delta)
}

/// MDI sender-B states `[0, 1, tau]` with the test state mirrored to `-kappa pi/4`.
pub fn mdi_states_bob(delta: f64) -> [QubitState; 3] {
    let k = kappa(delta);
    [0.0, k * PI / 2.0, -k * PI / 4.0].map(QubitState::planar)
}

/// P&M selection probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmSelection {
    /// `[p_0Z, p_1Z, p_0X]`.
    pub p_state: [f64; 3],
    /// Receiver's `Z`-basis probability.
    pub p_z_b: f64,
}

impl PmSelection {
    pub fn new(p_state: [f64; 3], p_z_b: f64) -> Result<Self> {
        let s = Self { p_state, p_z_b };
        s.validate()?;
        Ok(s)
    }

    /// Equal key-state probabilities `p_ZA / 2`, test state `1 - p_ZA`.
    pub fn from_basis(p_z_a: f64, p_z_b: f64) -> Result<Self> {
        check_probability("p_z_a", p_z_a)?;
        Self::new([p_z_a / 2.0, p_z_a / 2.0, 1.0 - p_z_a], p_z_b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in ["p_0z", "p_1z", "p_0x"].iter().zip(self.p_state) {
            check_probability(name, p)?;
        }
        check_probability("p_z_b", self.p_z_b)?;
        let sum: f64 = self.p_state.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(
                "p_state",
                format!("p_0z + p_1z + p_0x = {sum}, expected 1"),
            ));
        }
        if (self.p_state[0] - self.p_state[1]).abs() > SUM_TOLERANCE {
            return Err(invalid(
                "p_state",
                format!(
                    "key states need equal probabilities, got p_0z = {} and p_1z = {}",
                    self.p_state[0], self.p_state[1]
                ),
            ));
        }
        Ok(())
    }

    pub fn p_z_a(&self) -> f64 {
        self.p_state[0] + self.p_state[1]
    }

    pub fn p_x_b(&self) -> f64 {
        1.0 - self.p_z_b
    }
}

/// One MDI sender's probabilities `[p_0, p_1, p_tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartySelection {
    pub p_state: [f64; 3],
}

impl PartySelection {
    pub fn from_basis(p_z: f64) -> Result<Self> {
        check_probability("p_z", p_z)?;
        let s = Self {
            p_state: [p_z / 2.0, p_z / 2.0, 1.0 - p_z],
        };
        s.validate("p_state")?;
        Ok(s)
    }

    pub fn validate(&self, field: &'static str) -> Result<()> {
        for p in self.p_state {
            check_probability(field, p)?;
        }
        let sum: f64 = self.p_state.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(field, format!("probabilities sum to {sum}, expected 1")));
        }
        if (self.p_state[0] - self.p_state[1]).abs() > SUM_TOLERANCE {
            return Err(invalid(field, "key states need equal probabilities"));
        }
        Ok(())
    }

    pub fn p_z(&self) -> f64 {
        self.p_state[0] + self.p_state[1]
    }
}

/// MDI selection probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdiSelection {
    pub alice: PartySelection,
    pub bob: PartySelection,
    /// Probability that a detected `Z`-pair is moved to the test set.
    pub p_t_given_z: f64,
}

impl MdiSelection {
    pub fn from_basis(p_z_a: f64, p_z_b: f64, p_t_given_z: f64) -> Result<Self> {
        let s = Self {
            alice: PartySelection::from_basis(p_z_a)?,
            bob: PartySelection::from_basis(p_z_b)?,
            p_t_given_z,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.alice.validate("alice.p_state")?;
        self.bob.validate("bob.p_state")?;
        check_probability("p_t_given_z", self.p_t_given_z)
    }

    pub fn p_k_given_z(&self) -> f64 {
        1.0 - self.p_t_given_z
    }

    /// `p_{j,s} = p_j p'_s` at joint index `3 j + s`.
    pub fn p_joint(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for j in 0..3 {
            for s in 0..3 {
                out[3 * j + s] = self.alice.p_state[j] * self.bob.p_state[s];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    Pm(PmSelection),
    Mdi(MdiSelection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Pm,
    Mdi,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pm => "pm",
            Self::Mdi => "mdi",
        }
    }
}

impl Selection {
    pub fn protocol(&self) -> Protocol {
        match self {
            Self::Pm(_) => Protocol::Pm,
            Self::Mdi(_) => Protocol::Mdi,
        }
    }
}

/// Full protocol configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub selection: Selection,
    /// Encoding-flaw magnitude.
    pub delta: f64,
    pub n_tot: u64,
    pub eps_c: f64,
    pub eps_s: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
    /// Announced Bell outcomes (MDI only).
    pub announced: Vec<BellOutcome>,
    /// Relative share of the estimation failure probability per announced
    /// outcome; `None` splits it equally.
    pub omega_weights: Option<Vec<f64>>,
    /// Multiplies the nominal predictions fed to the Kato bounds.
    pub prediction_scale: f64,
    /// Evaluate every deviation term at zero (infinite-size limit).
    pub asymptotic: bool,
}

impl ProtocolConfig {
    /// Nominal parameters: `delta = 0.126`, `f = 1.16`, `eps_c = eps_s = 1e-8`.
    pub fn nominal(selection: Selection, n_tot: u64) -> Self {
        Self {
            selection,
            delta: 0.126,
            n_tot,
            eps_c: 1e-8,
            eps_s: 1e-8,
            f_ec: 1.16,
            announced: vec![BellOutcome::PsiMinus],
            omega_weights: None,
            prediction_scale: 1.0,
            asymptotic: false,
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.selection.protocol()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.selection {
            Selection::Pm(s) => s.validate()?,
            Selection::Mdi(s) => s.validate()?,
        }
        if !self.delta.is_finite() || self.delta.abs() >= PI {
            return Err(invalid("delta", format!("{} must lie in (-pi, pi)", self.delta)));
        }
        if self.n_tot == 0 {
            return Err(invalid("n_tot", "block size must be at least 1"));
        }
        for (name, e) in [("eps_c", self.eps_c), ("eps_s", self.eps_s)] {
            if !(e > 0.0 && e < 1.0) {
                return Err(invalid(name, format!("{e} must lie in (0, 1)")));
            }
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(invalid("f_ec", format!("{} must be >= 1", self.f_ec)));
        }
        if !(self.prediction_scale.is_finite() && self.prediction_scale > 0.0) {
            return Err(invalid("prediction_scale", "must be positive"));
        }
        if self.protocol() == Protocol::Mdi {
            if self.announced.is_empty() {
                return Err(invalid("announced", "at least one Bell outcome is required"));
            }
            let mut seen = self.announced.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != self.announced.len() {
                return Err(invalid("announced", "duplicate Bell outcome"));
            }
            if let Some(w) = &self.omega_weights {
                if w.len() != self.announced.len() || w.iter().any(|x| !(*x > 0.0)) {
                    return Err(invalid(
                        "omega_weights",
                        "need one positive weight per announced outcome",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Failure-probability share of each announced outcome, summing to one.
    pub fn omega_shares(&self) -> Vec<f64> {
        match &self.omega_weights {
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
            None => vec![1.0 / self.announced.len() as f64; self.announced.len()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pm_selection_rejects_bad_sums() {
        assert!(PmSelection::new([0.3, 0.3, 0.3], 0.5).is_err());
        assert!(PmSelection::new([0.3, 0.2, 0.5], 0.5).is_err());
        assert!(PmSelection::new([0.25, 0.25, 0.5], 1.5).is_err());
        let s = PmSelection::from_basis(0.8, 0.7).unwrap();
        assert!((s.p_state[2] - 0.2).abs() < 1e-15);
        assert!((s.p_x_b() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mdi_joint_probabilities_sum_to_one() {
        let s = MdiSelection::from_basis(0.6, 0.7, 0.1).unwrap();
        let total: f64 = s.p_joint().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((s.p_k_given_z() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn config_validation_names_field() {
        let mut c = ProtocolConfig::nominal(
            Selection::Pm(PmSelection::from_basis(0.5, 0.5).unwrap()),
            1000,
        );
        c.validate().unwrap();
        c.eps_s = 2.0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("eps_s"), "{msg}");
        c.eps_s = 1e-8;
        c.n_tot = 0;
        assert!(c.validate().unwrap_err().to_string().contains("n_tot"));
    }

    #[test]
    fn omega_shares_default_equal() {
        let mut c = ProtocolConfig::nominal(
            Selection::Mdi(MdiSelection::from_basis(0.5, 0.5, 0.1).unwrap()),
            1000,
        );
        c.announced = vec![BellOutcome::PsiMinus, BellOutcome::PsiPlus];
        assert_eq!(c.omega_shares(), vec![0.5, 0.5]);
        c.omega_weights = Some(vec![3.0, 1.0]);
        assert_eq!(c.omega_shares(), vec![0.75, 0.25]);
    }
}
