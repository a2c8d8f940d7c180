//! Prepare-and-measure estimation: tag probabilities, the random-sampling
//! phase-error bound, and the reweighted sums used by the Azuma and Kato
//! routes.
//!
//! State indices are `0 = 0_Z`, `1 = 1_Z`, `2 = 0_X`. Tag family `alpha`
//! bounds the detections of virtual state `alpha` that give the receiver
//! outcome `alpha xor 1` in the `X` basis; only test events with that
//! outcome are tagged in family `alpha`.

use crate::concentration::{PhaseErrorSums, ReweightedSum, ReweightedTerm};
use crate::config::PmSelection;
use crate::error::{domain, Error, Result};
use crate::qubit::{PartyDecomposition, PosNegDecomposition, Sign};
use crate::sampling::{g_lower_real, g_upper_real};

pub const TAGS: [Sign; 2] = [Sign::Pos, Sign::Neg];

/// Number of inequality applications charged by the Azuma and Kato routes.
pub const DEPENDENT_APPLICATIONS: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PmTagging {
    pub selection: PmSelection,
    pub decompositions: [PosNegDecomposition; 2],
    /// `p_{vir_alpha | Z}`.
    pub p_vir_given_z: [f64; 2],
    /// Joint probability of a virtual emission with both sides in `Z`.
    pub p_vir: [f64; 2],
    /// `[alpha][t]`: total probability of tag `t_alpha`.
    pub p_tag: [[f64; 2]; 2],
    /// `[alpha][t][j]`: probability of tag `t_alpha` for an `X`-measured
    /// emission of state `j`.
    pub p_tag_given_state: [[[f64; 3]; 2]; 2],
    pub tilde_vir: [f64; 2],
    pub tilde_pos_given_neg: [f64; 2],
}

impl PmTagging {
    pub fn c(&self, alpha: usize, t: Sign) -> f64 {
        self.decompositions[alpha].c(t)
    }
}

pub fn pm_tagging(selection: &PmSelection, party: &PartyDecomposition) -> Result<PmTagging> {
    selection.validate()?;
    let p_x_b = selection.p_x_b();
    let p_vir_given_z = party.weights();
    let p_vir = p_vir_given_z.map(|w| selection.p_z_a() * selection.p_z_b * w);

    let mut p_tag = [[0.0; 2]; 2];
    let mut p_tag_given_state = [[[0.0; 3]; 2]; 2];
    for (alpha, d) in party.decompositions.iter().enumerate() {
        for (ti, &t) in TAGS.iter().enumerate() {
            let support = d.support(t);
            if support.is_empty() {
                if d.c(t) > 0.0 {
                    return Err(Error::EmptyTagSet(if t == Sign::Pos { "pos" } else { "neg" }));
                }
                continue;
            }
            let total = support
                .iter()
                .map(|&j| selection.p_state[j] * p_x_b / d.p_given(j, t))
                .fold(f64::INFINITY, f64::min);
            p_tag[alpha][ti] = total;
            for &j in support {
                let denom = selection.p_state[j] * p_x_b;
                p_tag_given_state[alpha][ti][j] = if denom > 0.0 {
                    (total * d.p_given(j, t) / denom).min(1.0)
                } else {
                    0.0
                };
            }
        }
    }

    let mut tilde_vir = [0.0; 2];
    let mut tilde_pos_given_neg = [0.0; 2];
    for alpha in 0..2 {
        let d = &party.decompositions[alpha];
        let (p_pos, p_neg) = (p_tag[alpha][0], p_tag[alpha][1]);
        tilde_vir[alpha] = p_vir[alpha] / (p_vir[alpha] + p_pos / d.c_pos);
        tilde_pos_given_neg[alpha] = if d.c_neg == 0.0 {
            0.0
        } else {
            1.0 - p_neg / (p_neg + p_pos * d.c_neg / d.c_pos)
        };
    }

    Ok(PmTagging {
        selection: *selection,
        decompositions: party.decompositions.clone(),
        p_vir_given_z,
        p_vir,
        p_tag,
        p_tag_given_state,
        tilde_vir,
        tilde_pos_given_neg,
    })
}

/// Observed (or expected) P&M counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PmCounts {
    /// `[alpha][t]`: tagged test events with outcome `alpha xor 1`.
    pub n_tag: [[f64; 2]; 2],
    /// `[j][outcome]`: detected `X`-basis test events per emitted state.
    pub n_test: [[f64; 2]; 3],
    pub n_sifted: f64,
    pub n_bit_errors: f64,
    pub n_detected: f64,
}

impl PmCounts {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .n_tag
            .iter()
            .flatten()
            .chain(self.n_test.iter().flatten())
            .chain([&self.n_sifted, &self.n_bit_errors, &self.n_detected]);
        for &x in all {
            if !(x.is_finite() && x >= 0.0) {
                return Err(domain("PmCounts", format!("count {x} must be finite and >= 0")));
            }
        }
        if self.n_bit_errors > self.n_sifted {
            return Err(domain("PmCounts", "more bit errors than sifted bits"));
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
}

/// Random-sampling bound on `N_vir0^{1_X} + N_vir1^{0_X}`, failing with
/// probability at most `eps` (four bounds at `eps / 4`).
pub fn pm_phase_error_bound(counts: &PmCounts, tagging: &PmTagging, eps: f64) -> Result<f64> {
    pm_phase_error_bound_each(counts, tagging, eps / 4.0)
}

/// As [`pm_phase_error_bound`] with failure probability `e` for each of the
/// four bounds; `e = 1` gives the zero-deviation limit.
pub fn pm_phase_error_bound_each(counts: &PmCounts, tagging: &PmTagging, e: f64) -> Result<f64> {
    counts.validate()?;
    let mut total = 0.0;
    for alpha in 0..2 {
        let [n_pos, n_neg] = counts.n_tag[alpha];
        let inner = if tagging.c(alpha, Sign::Neg) == 0.0 {
            n_pos
        } else {
            n_pos - g_lower_real(n_neg, tagging.tilde_pos_given_neg[alpha], e)?
        };
        total += g_upper_real(inner.max(0.0), tagging.tilde_vir[alpha], e)?;
    }
    Ok(total)
}

/// Reweighted sums `sum_j p_vir c_j / (p_j p_XB) N_j^{alpha xor 1}` for both
/// families, with predictions from a second set of counts.
pub fn pm_reweighted_sums(
    counts: &PmCounts,
    predictions: &PmCounts,
    tagging: &PmTagging,
) -> Result<PhaseErrorSums> {
    counts.validate()?;
    predictions.validate()?;
    let p_x_b = tagging.selection.p_x_b();
    let mut sums = Vec::with_capacity(2);
    for alpha in 0..2 {
        let outcome = alpha ^ 1;
        let mut terms = Vec::with_capacity(3);
        for j in 0..3 {
            let c = tagging.decompositions[alpha].coeffs[j];
            if c == 0.0 {
                continue;
            }
            let denom = tagging.selection.p_state[j] * p_x_b;
            if denom <= 0.0 {
                return Err(domain(
                    "pm_reweighted_sums",
                    format!("state {j} carries weight but is never measured in X"),
                ));
            }
            terms.push(ReweightedTerm {
                weight: tagging.p_vir[alpha] * c / denom,
                observed: counts.n_test[j][outcome],
                predicted: predictions.n_test[j][outcome],
            });
        }
        sums.push(ReweightedSum {
            terms,
            trials: counts.n_detected,
        });
    }
    Ok(PhaseErrorSums {
        sums,
        applications: DEPENDENT_APPLICATIONS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::pm_states;

    fn untilted(p: [f64; 3], p_z_b: f64) -> PmTagging {
        let party = PartyDecomposition::new(pm_states(0.0)).unwrap();
        pm_tagging(&PmSelection::new(p, p_z_b).unwrap(), &party).unwrap()
    }

    #[test]
    fn untilted_tag_probabilities() {
        let t = untilted([0.25, 0.25, 0.5], 0.5);
        // family 0: vir0 = rho_0X, no negative part
        assert!((t.p_tag[0][0] - 0.25).abs() < 1e-12);
        assert_eq!(t.p_tag[0][1], 0.0);
        assert_eq!(t.tilde_pos_given_neg[0], 0.0);
        // family 1: (1, 1, -1)
        assert!((t.p_tag[1][0] - 0.25).abs() < 1e-12);
        assert!((t.p_tag[1][1] - 0.25).abs() < 1e-12);
        for (ti, j) in [(0, 0), (0, 1), (1, 2)] {
            assert!((t.p_tag_given_state[1][ti][j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn achieved_minimum_and_junk_remainder() {
        let party = PartyDecomposition::new(pm_states(0.126)).unwrap();
        for (pza, pzb) in [(0.9, 0.8), (0.3, 0.2), (0.5, 0.95)] {
            let t = pm_tagging(&PmSelection::from_basis(pza, pzb).unwrap(), &party).unwrap();
            for alpha in 0..2 {
                for ti in 0..2 {
                    if t.p_tag[alpha][ti] > 0.0 {
                        let best = t.p_tag_given_state[alpha][ti]
                            .iter()
                            .cloned()
                            .fold(0.0, f64::max);
                        assert!((best - 1.0).abs() < 1e-12);
                    }
                }
                for j in 0..3 {
                    let s = t.p_tag_given_state[alpha][0][j] + t.p_tag_given_state[alpha][1][j];
                    assert!(s <= 1.0 + 1e-12);
                }
                assert!(t.tilde_vir[alpha] > 0.0 && t.tilde_vir[alpha] < 1.0);
            }
        }
    }

    #[test]
    fn zero_counts_give_closed_form() {
        let party = PartyDecomposition::new(pm_states(0.126)).unwrap();
        let t = pm_tagging(&PmSelection::from_basis(0.7, 0.6).unwrap(), &party).unwrap();
        let eps = 1e-6;
        let got = pm_phase_error_bound(&PmCounts::default(), &t, eps).unwrap();
        let want: f64 = (0..2)
            .map(|a| -(eps / 4.0).ln() / (1.0 - t.tilde_vir[a]))
            .sum();
        assert!((got - want).abs() < 1e-9 * want);
    }

    #[test]
    fn counts_validation() {
        let mut c = PmCounts {
            n_sifted: 5.0,
            n_bit_errors: 6.0,
            ..PmCounts::default()
        };
        assert!(c.validate().is_err());
        c.n_bit_errors = 1.0;
        c.n_tag[0][0] = -1.0;
        assert!(c.validate().is_err());
    }
}
