//! MDI estimation: key/test assignment, per-outcome tag probabilities, the
//! random-sampling phase-error bound and the Azuma/Kato reweighted sums.
//!
//! Joint state pairs `(j, s)` use index `3 j + s` with `0 = 0_Z`,
//! `1 = 1_Z`, `2 = tau`.

use crate::concentration::{PhaseErrorSums, ReweightedSum, ReweightedTerm};
use crate::config::MdiSelection;
use crate::error::{domain, Error, Result};
use crate::qubit::{mdi_joint_coefficients, BellOutcome, JointDecomposition, PartyDecomposition, Sign};
use crate::sampling::{g_lower_real, g_upper_real};

/// Inequality applications charged per announced outcome by the Azuma and
/// Kato routes.
pub const DEPENDENT_APPLICATIONS_PER_OUTCOME: u32 = 9;

pub fn is_key_pair(js: usize) -> bool {
    js / 3 < 2 && js % 3 < 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaTagging {
    pub outcome: BellOutcome,
    pub joint: JointDecomposition,
    /// `p_K * p_{ph|K}`.
    pub p_ph: f64,
    /// `[t]`: `p_{t | T}`.
    pub p_tag_given_test: [f64; 2],
    /// `[t][js]`: `p_{t | js, T}`.
    pub p_tag_given_state: [[f64; 9]; 2],
    pub tilde_ph: f64,
    pub tilde_pos_given_neg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdiTagging {
    pub selection: MdiSelection,
    pub p_joint: [f64; 9],
    pub p_key: f64,
    pub p_test: f64,
    pub p_test_given_state: [f64; 9],
    pub p_state_given_test: [f64; 9],
    pub omegas: Vec<OmegaTagging>,
}

impl MdiTagging {
    pub fn omega(&self, outcome: BellOutcome) -> Option<&OmegaTagging> {
        self.omegas.iter().find(|o| o.outcome == outcome)
    }
}

pub fn mdi_tagging(
    selection: &MdiSelection,
    alice: &PartyDecomposition,
    bob: &PartyDecomposition,
    announced: &[BellOutcome],
) -> Result<MdiTagging> {
    selection.validate()?;
    let p_joint = selection.p_joint();
    let p_key = selection.alice.p_z() * selection.bob.p_z() * selection.p_k_given_z();
    let p_test = 1.0 - p_key;
    let mut p_test_given_state = [1.0; 9];
    let mut p_state_given_test = [0.0; 9];
    for js in 0..9 {
        if is_key_pair(js) {
            p_test_given_state[js] = selection.p_t_given_z;
        }
        if p_test > 0.0 {
            p_state_given_test[js] = p_joint[js] * p_test_given_state[js] / p_test;
        }
    }

    let mut omegas = Vec::with_capacity(announced.len());
    for &outcome in announced {
        let joint = mdi_joint_coefficients(
            &alice.decompositions,
            &bob.decompositions,
            alice.weights(),
            bob.weights(),
            outcome,
        )?;
        let d = &joint.decomposition;
        let mut p_tag_given_test = [0.0; 2];
        let mut p_tag_given_state = [[0.0; 9]; 2];
        for (ti, t) in [Sign::Pos, Sign::Neg].into_iter().enumerate() {
            let support = d.support(t);
            if support.is_empty() {
                if d.c(t) > 0.0 {
                    return Err(Error::EmptyTagSet(if t == Sign::Pos { "pos" } else { "neg" }));
                }
                continue;
            }
            let total = support
                .iter()
                .map(|&js| p_state_given_test[js] / d.p_given(js, t))
                .fold(f64::INFINITY, f64::min);
            p_tag_given_test[ti] = total;
            for &js in support {
                p_tag_given_state[ti][js] = if p_state_given_test[js] > 0.0 {
                    (total * d.p_given(js, t) / p_state_given_test[js]).min(1.0)
                } else {
                    0.0
                };
            }
        }
        let p_ph = p_key * joint.p_ph_given_key;
        let p_pos = p_test * p_tag_given_test[0];
        let p_neg = p_test * p_tag_given_test[1];
        let tilde_ph = p_ph / (p_ph + p_pos / d.c_pos);
        let tilde_pos_given_neg = if d.c_neg == 0.0 {
            0.0
        } else {
            1.0 - p_neg / (p_neg + p_pos * d.c_neg / d.c_pos)
        };
        omegas.push(OmegaTagging {
            outcome,
            joint,
            p_ph,
            p_tag_given_test,
            p_tag_given_state,
            tilde_ph,
            tilde_pos_given_neg,
        });
    }

    Ok(MdiTagging {
        selection: *selection,
        p_joint,
        p_key,
        p_test,
        p_test_given_state,
        p_state_given_test,
        omegas,
    })
}

/// Counts for one announced outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaCounts {
    pub outcome: BellOutcome,
    pub n_pos: f64,
    pub n_neg: f64,
    /// Detected test rounds per joint index.
    pub n_test: [f64; 9],
}

impl OmegaCounts {
    pub fn empty(outcome: BellOutcome) -> Self {
        Self {
            outcome,
            n_pos: 0.0,
            n_neg: 0.0,
            n_test: [0.0; 9],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdiCounts {
    pub omegas: Vec<OmegaCounts>,
    pub n_sifted: f64,
    pub n_bit_errors: f64,
    pub n_detected: f64,
}

impl MdiCounts {
    pub fn validate(&self) -> Result<()> {
        let mut all = vec![self.n_sifted, self.n_bit_errors, self.n_detected];
        for o in &self.omegas {
            all.extend([o.n_pos, o.n_neg]);
            all.extend(o.n_test);
        }
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(domain("MdiCounts", "counts must be finite and >= 0"));
        }
        if self.n_bit_errors > self.n_sifted {
            return Err(domain("MdiCounts", "more bit errors than sifted bits"));
        }
        Ok(())
    }

    pub fn bit_error_rate(&self) -> f64 {
        if self.n_sifted > 0.0 {
            self.n_bit_errors / self.n_sifted
        } else {
            0.0
        }
    }

    fn omega(&self, outcome: BellOutcome) -> Result<&OmegaCounts> {
        self.omegas
            .iter()
            .find(|o| o.outcome == outcome)
            .ok_or_else(|| domain("MdiCounts", format!("no counts for outcome {}", outcome.name())))
    }
}

/// Random-sampling bound on the total phase errors over all announced
/// outcomes. `eps_per_omega[i]` is the failure probability of outcome `i`.
pub fn mdi_phase_error_bound(
    counts: &MdiCounts,
    tagging: &MdiTagging,
    eps_per_omega: &[f64],
) -> Result<f64> {
    let halves: Vec<f64> = eps_per_omega.iter().map(|e| e / 2.0).collect();
    mdi_phase_error_bound_each(counts, tagging, &halves)
}

/// As [`mdi_phase_error_bound`] with `eps_each[i]` for each of the two
/// bounds of outcome `i`; `1` gives the zero-deviation limit.
pub fn mdi_phase_error_bound_each(
    counts: &MdiCounts,
    tagging: &MdiTagging,
    eps_each: &[f64],
) -> Result<f64> {
    counts.validate()?;
    if eps_each.len() != tagging.omegas.len() {
        return Err(domain(
            "mdi_phase_error_bound",
            "need one failure probability per announced outcome",
        ));
    }
    let mut total = 0.0;
    for (om, &e) in tagging.omegas.iter().zip(eps_each) {
        let c = counts.omega(om.outcome)?;
        let inner = if om.joint.decomposition.c_neg == 0.0 {
            c.n_pos
        } else {
            c.n_pos - g_lower_real(c.n_neg, om.tilde_pos_given_neg, e)?
        };
        total += g_upper_real(inner.max(0.0), om.tilde_ph, e)?;
    }
    Ok(total)
}

/// One reweighted sum per announced outcome with weights
/// `p_ph c_js / (p_js p_{T|js})`.
pub fn mdi_reweighted_sums(
    counts: &MdiCounts,
    predictions: &MdiCounts,
    tagging: &MdiTagging,
) -> Result<PhaseErrorSums> {
    counts.validate()?;
    predictions.validate()?;
    let mut sums = Vec::with_capacity(tagging.omegas.len());
    for om in &tagging.omegas {
        let c = counts.omega(om.outcome)?;
        let p = predictions.omega(om.outcome)?;
        let mut terms = Vec::new();
        for js in 0..9 {
            let coeff = om.joint.decomposition.coeffs[js];
            if coeff == 0.0 {
                continue;
            }
            let denom = tagging.p_joint[js] * tagging.p_test_given_state[js];
            if denom <= 0.0 {
                return Err(domain(
                    "mdi_reweighted_sums",
                    format!("pair {js} carries weight but is never tested"),
                ));
            }
            terms.push(ReweightedTerm {
                weight: om.p_ph * coeff / denom,
                observed: c.n_test[js],
                predicted: p.n_test[js],
            });
        }
        sums.push(ReweightedSum {
            terms,
            trials: counts.n_detected,
        });
    }
    Ok(PhaseErrorSums {
        sums,
        applications: DEPENDENT_APPLICATIONS_PER_OUTCOME * tagging.omegas.len() as u32,
    })
}
