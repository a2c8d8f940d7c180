//! Nominal no-eavesdropper channel models with expected and sampled counts.
//!
//! P&M: single-photon transmittance `eta = 10^(-loss_db / 10)` and two
//! threshold detectors with independent dark counts `p_d`. For a state with
//! ideal outcome probability `q_b` in the measured basis,
//!
//! ```text
//! P(b) = eta [q_b (1 - p_d) + p_d / 2] + (1 - eta) [p_d (1 - p_d) + p_d^2 / 2]
//! ```
//!
//! with double clicks mapped to a uniform bit. Misalignment flips `q_b`
//! with the given probability.
//!
//! MDI: each arm carries half the loss and the relay announces `psi-` or
//! `psi+` with
//!
//! ```text
//! (1 - p_d)^2 [ (eta_a eta_b / 2) sin^2(theta -+ theta')
//!             + p_d (eta_a eta_b / 2)(1 + cos 2theta cos 2theta')
//!             + p_d (1 - eta_a) eta_b + p_d eta_a (1 - eta_b)
//!             + 2 p_d^2 (1 - eta_a)(1 - eta_b) ]
//! ```
//!
//! The Bloch form replaces `cos 2theta` by `s_z` and `sin 2theta` by `s_x`,
//! which makes both models affine in each emitted state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::config::PmSelection;
use crate::error::{domain, Result};
use crate::mdi::{is_key_pair, MdiCounts, MdiTagging, OmegaCounts};
use crate::pm::{PmCounts, PmTagging};
use crate::qubit::{BellOutcome, BlochVector, PartyDecomposition};

/// Deterministic generator used by the samplers and the coverage runs.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FIBER_LOSS_DB_PER_KM: f64 = 0.2;
pub const NOMINAL_DARK_COUNT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Total loss between the senders and the measuring party, in dB.
    pub loss_db: f64,
    /// Dark-count probability per detector per gate.
    pub dark_count: f64,
    /// P&M bit-flip probability from misalignment.
    pub misalignment: f64,
    /// Explicit MDI arm transmittances; `None` splits the loss evenly.
    pub arms: Option<[f64; 2]>,
}

impl ChannelParams {
    pub fn new(loss_db: f64, dark_count: f64) -> Result<Self> {
        let p = Self {
            loss_db,
            dark_count,
            misalignment: 0.0,
            arms: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_distance_km(km: f64, dark_count: f64) -> Result<Self> {
        Self::new(km * FIBER_LOSS_DB_PER_KM, dark_count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db.is_finite() && self.loss_db >= 0.0) {
            return Err(domain("loss_db", format!("{} must be finite and >= 0", self.loss_db)));
        }
        if !(0.0..1.0).contains(&self.dark_count) {
            return Err(domain("dark_count", format!("{} must lie in [0, 1)", self.dark_count)));
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(domain("misalignment", format!("{} must lie in [0, 0.5]", self.misalignment)));
        }
        if let Some(a) = self.arms {
            if a.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(domain("arms", format!("{a:?} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }

    pub fn arm_transmittances(&self) -> [f64; 2] {
        self.arms.unwrap_or_else(|| {
            let e = 10f64.powf(-self.loss_db / 20.0);
            [e, e]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Z,
    X,
}

pub fn pm_detection_probability(params: &ChannelParams) -> f64 {
    let eta = params.transmittance();
    let pd = params.dark_count;
    1.0 - (1.0 - eta) * (1.0 - pd) * (1.0 - pd)
}

/// Joint probability of a detection with `outcome` for a state with the
/// given Bloch vector.
pub fn pm_outcome_probability_bloch(
    state: &BlochVector,
    basis: Basis,
    outcome: usize,
    params: &ChannelParams,
) -> f64 {
    let axis = match basis {
        Basis::Z => state.s_z,
        Basis::X => state.s_x,
    };
    let q0 = (1.0 + axis) / 2.0;
    let q = if outcome == 0 { q0 } else { 1.0 - q0 };
    let e = params.misalignment;
    let q = (1.0 - e) * q + e * (1.0 - q);
    let eta = params.transmittance();
    let pd = params.dark_count;
    eta * (q * (1.0 - pd) + pd / 2.0) + (1.0 - eta) * (pd * (1.0 - pd) + pd * pd / 2.0)
}

/// Joint probability of a detection with `outcome` when state `j` of
/// `states` is sent.
pub fn pm_outcome_probability(
    states: &[BlochVector; 3],
    j: usize,
    basis: Basis,
    outcome: usize,
    params: &ChannelParams,
) -> f64 {
    pm_outcome_probability_bloch(&states[j], basis, outcome, params)
}

fn psi_sign(bell: BellOutcome) -> Result<f64> {
    match bell {
        BellOutcome::PsiMinus => Ok(-1.0),
        BellOutcome::PsiPlus => Ok(1.0),
        other => Err(domain(
            "bell",
            format!("the relay model only announces psi- and psi+, got {}", other.name()),
        )),
    }
}

fn mdi_click(zz: f64, xx: f64, sign: f64, params: &ChannelParams) -> f64 {
    let [ea, eb] = params.arm_transmittances();
    let pd = params.dark_count;
    let both = ea * eb;
    let signal = both / 4.0 * (1.0 - zz + sign * xx);
    let noise = pd * both / 2.0 * (1.0 + zz)
        + pd * (1.0 - ea) * eb
        + pd * ea * (1.0 - eb)
        + 2.0 * pd * pd * (1.0 - ea) * (1.0 - eb);
    (1.0 - pd) * (1.0 - pd) * (signal + noise)
}

/// Announcement probability for encoded angles `theta_a`, `theta_b`.
pub fn mdi_click_probability(
    theta_a: f64,
    theta_b: f64,
    params: &ChannelParams,
    bell: BellOutcome,
) -> Result<f64> {
    let sign = psi_sign(bell)?;
    let zz = (2.0 * theta_a).cos() * (2.0 * theta_b).cos();
    let xx = (2.0 * theta_a).sin() * (2.0 * theta_b).sin();
    Ok(mdi_click(zz, xx, sign, params))
}

pub fn mdi_click_probability_bloch(
    a: &BlochVector,
    b: &BlochVector,
    params: &ChannelParams,
    bell: BellOutcome,
) -> Result<f64> {
    let sign = psi_sign(bell)?;
    Ok(mdi_click(a.s_z * b.s_z, a.s_x * b.s_x, sign, params))
}

/// Whether a detected key pair `(j, s)` announced as `bell` is a bit error.
pub fn is_bit_error(j: usize, s: usize, bell: BellOutcome) -> bool {
    match bell {
        BellOutcome::PsiMinus | BellOutcome::PsiPlus => j == s,
        BellOutcome::PhiMinus | BellOutcome::PhiPlus => j != s,
    }
}

fn pm_blochs(party: &PartyDecomposition) -> [BlochVector; 3] {
    party.states.map(|s| s.bloch())
}

/// Real-valued P&M expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct PmExpected {
    pub counts: PmCounts,
    /// `[alpha][t][j]` breakdown of the tagged counts.
    pub n_tag_by_state: [[[f64; 3]; 2]; 2],
    /// Expected virtual phase errors `N_vir0^{1_X} + N_vir1^{0_X}`.
    pub n_phase_errors: f64,
}

pub fn pm_expected_counts(
    tagging: &PmTagging,
    party: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: f64,
) -> PmExpected {
    let sel = &tagging.selection;
    let states = pm_blochs(party);
    let p_x_b = sel.p_x_b();
    let mut c = PmCounts {
        n_detected: n_tot * pm_detection_probability(params),
        ..PmCounts::default()
    };
    for j in 0..2 {
        let w = n_tot * sel.p_state[j] * sel.p_z_b;
        c.n_sifted += w * (pm_outcome_probability(&states, j, Basis::Z, 0, params)
            + pm_outcome_probability(&states, j, Basis::Z, 1, params));
        c.n_bit_errors += w * pm_outcome_probability(&states, j, Basis::Z, j ^ 1, params);
    }
    let mut by_state = [[[0.0; 3]; 2]; 2];
    for j in 0..3 {
        for beta in 0..2 {
            let n = n_tot * sel.p_state[j] * p_x_b * pm_outcome_probability(&states, j, Basis::X, beta, params);
            c.n_test[j][beta] = n;
            let alpha = beta ^ 1;
            for t in 0..2 {
                let v = n * tagging.p_tag_given_state[alpha][t][j];
                by_state[alpha][t][j] = v;
                c.n_tag[alpha][t] += v;
            }
        }
    }
    let vir = &party.virtual_states.bloch;
    let n_phase_errors = (0..2)
        .map(|a| n_tot * tagging.p_vir[a] * pm_outcome_probability_bloch(&vir[a], Basis::X, a ^ 1, params))
        .sum();
    PmExpected {
        counts: c,
        n_tag_by_state: by_state,
        n_phase_errors,
    }
}

/// Real-valued MDI expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct MdiExpected {
    pub counts: MdiCounts,
    /// `[omega][t][js]` breakdown of the tagged counts.
    pub n_tag_by_state: Vec<[[f64; 9]; 2]>,
    pub n_phase_errors: f64,
}

fn joint_clicks(
    alice: &[BlochVector; 3],
    bob: &[BlochVector; 3],
    params: &ChannelParams,
    bell: BellOutcome,
) -> Result<[f64; 9]> {
    let mut out = [0.0; 9];
    for j in 0..3 {
        for s in 0..3 {
            out[3 * j + s] = mdi_click_probability_bloch(&alice[j], &bob[s], params, bell)?;
        }
    }
    Ok(out)
}

pub fn mdi_expected_counts(
    tagging: &MdiTagging,
    alice: &PartyDecomposition,
    bob: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: f64,
) -> Result<MdiExpected> {
    let (ab, bb) = (pm_blochs(alice), pm_blochs(bob));
    let p_k_given_z = tagging.selection.p_k_given_z();
    let mut counts = MdiCounts {
        omegas: Vec::with_capacity(tagging.omegas.len()),
        n_sifted: 0.0,
        n_bit_errors: 0.0,
        n_detected: 0.0,
    };
    let mut by_state = Vec::with_capacity(tagging.omegas.len());
    let mut n_phase_errors = 0.0;
    for om in &tagging.omegas {
        let clicks = joint_clicks(&ab, &bb, params, om.outcome)?;
        let mut oc = OmegaCounts::empty(om.outcome);
        let mut br = [[0.0; 9]; 2];
        for js in 0..9 {
            let detected = n_tot * tagging.p_joint[js] * clicks[js];
            counts.n_detected += detected;
            if is_key_pair(js) {
                let key = detected * p_k_given_z;
                counts.n_sifted += key;
                if is_bit_error(js / 3, js % 3, om.outcome) {
                    counts.n_bit_errors += key;
                }
            }
            let test = detected * tagging.p_test_given_state[js];
            oc.n_test[js] = test;
            for t in 0..2 {
                br[t][js] = test * om.p_tag_given_state[t][js];
            }
            oc.n_pos += br[0][js];
            oc.n_neg += br[1][js];
        }
        let (va, vb) = (&alice.virtual_states, &bob.virtual_states);
        for &(a, b) in &om.outcome.phase_error_pairs() {
            n_phase_errors += n_tot
                * tagging.p_key
                * va.weights[a]
                * vb.weights[b]
                * mdi_click_probability_bloch(&va.bloch[a], &vb.bloch[b], params, om.outcome)?;
        }
        counts.omegas.push(oc);
        by_state.push(br);
    }
    Ok(MdiExpected {
        counts,
        n_tag_by_state: by_state,
        n_phase_errors,
    })
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("valid binomial").sample(rng)
    }
}

/// Multinomial draw over `probs`; the remainder `1 - sum(probs)` is an
/// implicit last category that is not returned.
pub fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let k = if mass <= 0.0 {
            0
        } else {
            binomial(left, (p / mass).clamp(0.0, 1.0), rng)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    None
}

/// Integer P&M counts from one simulated block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PmSample {
    pub n_tag: [[u64; 2]; 2],
    pub n_test: [[u64; 2]; 3],
    pub n_sifted: u64,
    pub n_bit_errors: u64,
    pub n_detected: u64,
    /// Virtual phase errors; only the virtual-protocol sampler sets this.
    pub n_phase_errors: Option<u64>,
}

impl PmSample {
    pub fn counts(&self) -> PmCounts {
        PmCounts {
            n_tag: self.n_tag.map(|r| r.map(|x| x as f64)),
            n_test: self.n_test.map(|r| r.map(|x| x as f64)),
            n_sifted: self.n_sifted as f64,
            n_bit_errors: self.n_bit_errors as f64,
            n_detected: self.n_detected as f64,
        }
    }
}

fn pm_key_error_rate(states: &[BlochVector; 3], params: &ChannelParams) -> f64 {
    let p_det = pm_detection_probability(params);
    if p_det <= 0.0 {
        return 0.0;
    }
    (pm_outcome_probability(states, 0, Basis::Z, 1, params)
        + pm_outcome_probability(states, 1, Basis::Z, 0, params))
        / (2.0 * p_det)
}

fn tag_test_events<R: Rng + ?Sized>(
    out: &mut PmSample,
    tagging: &PmTagging,
    j: usize,
    counts: [u64; 2],
    rng: &mut R,
) {
    for beta in 0..2 {
        out.n_test[j][beta] += counts[beta];
        let alpha = beta ^ 1;
        let p = [
            tagging.p_tag_given_state[alpha][0][j],
            tagging.p_tag_given_state[alpha][1][j],
        ];
        let tags = multinomial(counts[beta], &p, rng);
        out.n_tag[alpha][0] += tags[0];
        out.n_tag[alpha][1] += tags[1];
    }
}

/// Samples one block of the virtual P&M protocol. Rounds in which both
/// sides choose `Z` emit a virtual state and are measured in `X`, which
/// yields the phase errors alongside the observable test counts.
pub fn pm_sample<R: Rng + ?Sized>(
    tagging: &PmTagging,
    party: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: u64,
    rng: &mut R,
) -> PmSample {
    let sel: &PmSelection = &tagging.selection;
    let states = pm_blochs(party);
    let vir = &party.virtual_states.bloch;
    let p_x_b = sel.p_x_b();
    let cells = [
        tagging.p_vir[0],
        tagging.p_vir[1],
        sel.p_state[0] * p_x_b,
        sel.p_state[1] * p_x_b,
        sel.p_state[2] * p_x_b,
    ];
    let per_cell = multinomial(n_tot, &cells, rng);
    let idle = n_tot - per_cell.iter().sum::<u64>();
    let mut out = PmSample::default();

    let mut n_ph = 0;
    for a in 0..2 {
        let p = [0, 1].map(|b| pm_outcome_probability_bloch(&vir[a], Basis::X, b, params));
        let k = multinomial(per_cell[a], &p, rng);
        n_ph += k[a ^ 1];
        out.n_sifted += k[0] + k[1];
    }
    out.n_bit_errors = binomial(out.n_sifted, pm_key_error_rate(&states, params), rng);
    out.n_detected = out.n_sifted;

    for j in 0..3 {
        let p = [0, 1].map(|b| pm_outcome_probability(&states, j, Basis::X, b, params));
        let k = multinomial(per_cell[2 + j], &p, rng);
        out.n_detected += k[0] + k[1];
        tag_test_events(&mut out, tagging, j, [k[0], k[1]], rng);
    }
    out.n_detected += binomial(idle, pm_detection_probability(params), rng);
    out.n_phase_errors = Some(n_ph);
    out
}

/// Round-by-round simulation of the actual P&M protocol, for checking
/// [`pm_sample`] against. Phase errors are not observable here.
pub fn pm_sample_per_round<R: Rng + ?Sized>(
    tagging: &PmTagging,
    party: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: u64,
    rng: &mut R,
) -> PmSample {
    let sel = &tagging.selection;
    let states = pm_blochs(party);
    let mut out = PmSample::default();
    for _ in 0..n_tot {
        let j = categorical(&sel.p_state, rng).unwrap_or(2);
        let basis = if rng.random::<f64>() < sel.p_z_b { Basis::Z } else { Basis::X };
        let p = [0, 1].map(|b| pm_outcome_probability(&states, j, basis, b, params));
        let Some(b) = categorical(&p, rng) else { continue };
        out.n_detected += 1;
        match basis {
            Basis::Z if j < 2 => {
                out.n_sifted += 1;
                if b != j {
                    out.n_bit_errors += 1;
                }
            }
            Basis::Z => {}
            Basis::X => {
                let mut k = [0, 0];
                k[b] = 1;
                tag_test_events(&mut out, tagging, j, k, rng);
            }
        }
    }
    out
}

/// Integer MDI counts from one simulated block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdiSample {
    /// Per announced outcome: `(n_pos, n_neg, n_test[js])`.
    pub omegas: Vec<(BellOutcome, u64, u64, [u64; 9])>,
    pub n_sifted: u64,
    pub n_bit_errors: u64,
    pub n_detected: u64,
    pub n_phase_errors: Option<u64>,
}

impl MdiSample {
    fn empty(tagging: &MdiTagging) -> Self {
        Self {
            omegas: tagging.omegas.iter().map(|o| (o.outcome, 0, 0, [0; 9])).collect(),
            n_sifted: 0,
            n_bit_errors: 0,
            n_detected: 0,
            n_phase_errors: None,
        }
    }

    pub fn counts(&self) -> MdiCounts {
        MdiCounts {
            omegas: self
                .omegas
                .iter()
                .map(|&(outcome, pos, neg, test)| OmegaCounts {
                    outcome,
                    n_pos: pos as f64,
                    n_neg: neg as f64,
                    n_test: test.map(|x| x as f64),
                })
                .collect(),
            n_sifted: self.n_sifted as f64,
            n_bit_errors: self.n_bit_errors as f64,
            n_detected: self.n_detected as f64,
        }
    }
}

fn all_clicks(
    tagging: &MdiTagging,
    alice: &PartyDecomposition,
    bob: &PartyDecomposition,
    params: &ChannelParams,
) -> Result<Vec<[f64; 9]>> {
    let (ab, bb) = (pm_blochs(alice), pm_blochs(bob));
    tagging
        .omegas
        .iter()
        .map(|o| joint_clicks(&ab, &bb, params, o.outcome))
        .collect()
}

fn mdi_key_error_rate(tagging: &MdiTagging, clicks: &[[f64; 9]]) -> f64 {
    let (mut all, mut err) = (0.0, 0.0);
    for (om, c) in tagging.omegas.iter().zip(clicks) {
        for js in (0..9).filter(|&js| is_key_pair(js)) {
            all += c[js];
            if is_bit_error(js / 3, js % 3, om.outcome) {
                err += c[js];
            }
        }
    }
    if all > 0.0 {
        err / all
    } else {
        0.0
    }
}

/// Samples one block of the virtual MDI protocol: key rounds emit virtual
/// pairs, so phase errors are available next to the test counts.
pub fn mdi_sample<R: Rng + ?Sized>(
    tagging: &MdiTagging,
    alice: &PartyDecomposition,
    bob: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: u64,
    rng: &mut R,
) -> Result<MdiSample> {
    let clicks = all_clicks(tagging, alice, bob, params)?;
    let (va, vb) = (&alice.virtual_states, &bob.virtual_states);
    let mut cells = Vec::with_capacity(13);
    for a in 0..2 {
        for b in 0..2 {
            cells.push(tagging.p_key * va.weights[a] * vb.weights[b]);
        }
    }
    for js in 0..9 {
        cells.push(tagging.p_joint[js] * tagging.p_test_given_state[js]);
    }
    let per_cell = multinomial(n_tot, &cells, rng);
    let mut out = MdiSample::empty(tagging);

    let mut n_ph = 0;
    for a in 0..2 {
        for b in 0..2 {
            let p: Vec<f64> = tagging
                .omegas
                .iter()
                .map(|o| mdi_click_probability_bloch(&va.bloch[a], &vb.bloch[b], params, o.outcome))
                .collect::<Result<_>>()?;
            let k = multinomial(per_cell[2 * a + b], &p, rng);
            for (om, &n) in tagging.omegas.iter().zip(&k) {
                out.n_sifted += n;
                if om.outcome.phase_error_pairs().contains(&(a, b)) {
                    n_ph += n;
                }
            }
        }
    }
    out.n_bit_errors = binomial(out.n_sifted, mdi_key_error_rate(tagging, &clicks), rng);
    out.n_detected = out.n_sifted;

    for js in 0..9 {
        let p: Vec<f64> = clicks.iter().map(|c| c[js]).collect();
        let k = multinomial(per_cell[4 + js], &p, rng);
        for (i, om) in tagging.omegas.iter().enumerate() {
            out.n_detected += k[i];
            out.omegas[i].3[js] += k[i];
            let tags = multinomial(
                k[i],
                &[om.p_tag_given_state[0][js], om.p_tag_given_state[1][js]],
                rng,
            );
            out.omegas[i].1 += tags[0];
            out.omegas[i].2 += tags[1];
        }
    }
    out.n_phase_errors = Some(n_ph);
    Ok(out)
}

/// Order of operations for [`mdi_sample_per_round`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaggingFlow {
    /// Assign key/test and one tag per outcome to every emission before
    /// the relay announces.
    AllRounds,
    /// Assign key/test and the tag only for announced rounds.
    DetectedOnly,
}

/// Round-by-round simulation of the actual MDI protocol.
pub fn mdi_sample_per_round<R: Rng + ?Sized>(
    tagging: &MdiTagging,
    alice: &PartyDecomposition,
    bob: &PartyDecomposition,
    params: &ChannelParams,
    n_tot: u64,
    flow: TaggingFlow,
    rng: &mut R,
) -> Result<MdiSample> {
    let clicks = all_clicks(tagging, alice, bob, params)?;
    let sel = &tagging.selection;
    let mut out = MdiSample::empty(tagging);
    let mut tags = vec![None; tagging.omegas.len()];
    for _ in 0..n_tot {
        let j = categorical(&sel.alice.p_state, rng).unwrap_or(2);
        let s = categorical(&sel.bob.p_state, rng).unwrap_or(2);
        let js = 3 * j + s;
        let draw_test = |rng: &mut R| rng.random::<f64>() < tagging.p_test_given_state[js];
        let draw_tag = |i: usize, rng: &mut R| {
            let om = &tagging.omegas[i];
            categorical(&[om.p_tag_given_state[0][js], om.p_tag_given_state[1][js]], rng)
        };
        let mut test = false;
        if flow == TaggingFlow::AllRounds {
            test = draw_test(rng);
            for (i, t) in tags.iter_mut().enumerate() {
                *t = if test { draw_tag(i, rng) } else { None };
            }
        }
        let p: Vec<f64> = clicks.iter().map(|c| c[js]).collect();
        let Some(i) = categorical(&p, rng) else { continue };
        out.n_detected += 1;
        let tag = match flow {
            TaggingFlow::AllRounds => tags[i],
            TaggingFlow::DetectedOnly => {
                test = draw_test(rng);
                if test {
                    draw_tag(i, rng)
                } else {
                    None
                }
            }
        };
        if test {
            out.omegas[i].3[js] += 1;
            match tag {
                Some(0) => out.omegas[i].1 += 1,
                Some(_) => out.omegas[i].2 += 1,
                None => {}
            }
        } else {
            out.n_sifted += 1;
            if is_bit_error(j, s, tagging.omegas[i].outcome) {
                out.n_bit_errors += 1;
            }
        }
    }
    Ok(out)
}
