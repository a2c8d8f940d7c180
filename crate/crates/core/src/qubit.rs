//! Bloch-sphere representation of the emitted qubit states and the signed
//! linear decomposition of virtual (or phase-error) operators into the
//! operators of the states that are actually sent.
//!
//! Bloch components are stored in `(s_z, s_x, s_y)` order. This is a cyclic
//! permutation of `(x, y, z)`, so the usual cross-product formula applied in
//! that component order still gives a right-handed frame.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{domain, Error, Result};

/// Coefficients with magnitude below this are treated as exactly zero.
pub const ZERO_COEFFICIENT: f64 = 1e-10;
/// Guard on the determinant of the 3x3 Bloch matrix.
pub const SINGULAR_DETERMINANT: f64 = 1e-12;
/// Tolerance on the cross product when fitting a plane through three endpoints.
pub const COLLINEAR_TOLERANCE: f64 = 1e-10;
/// Allowed deviation of a target from the common plane.
pub const PLANE_TOLERANCE: f64 = 1e-8;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub s_z: f64,
    pub s_x: f64,
    pub s_y: f64,
}

impl BlochVector {
    pub const fn new(s_z: f64, s_x: f64, s_y: f64) -> Self {
        Self { s_z, s_x, s_y }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.s_z * other.s_z + self.s_x * other.s_x + self.s_y * other.s_y
    }

    /// Cross product in the right-handed `(z, x, y)` frame.
    pub fn cross(&self, other: &Self) -> Self {
        Self {
            s_z: self.s_x * other.s_y - self.s_y * other.s_x,
            s_x: self.s_y * other.s_z - self.s_z * other.s_y,
            s_y: self.s_z * other.s_x - self.s_x * other.s_z,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(
            self.s_z - other.s_z,
            self.s_x - other.s_x,
            self.s_y - other.s_y,
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(k * self.s_z, k * self.s_x, k * self.s_y)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `(I + s_z Z + s_x X + s_y Y) / 2`.
    pub fn density_matrix(&self) -> Matrix2<Complex64> {
        let half = 0.5;
        Matrix2::new(
            Complex64::new(half * (1.0 + self.s_z), 0.0),
            Complex64::new(half * self.s_x, -half * self.s_y),
            Complex64::new(half * self.s_x, half * self.s_y),
            Complex64::new(half * (1.0 - self.s_z), 0.0),
        )
    }

    /// Rotation by `angle` about the unit axis `axis` (Rodrigues formula).
    pub fn rotate(&self, axis: &BlochVector, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let k_cross_v = axis.cross(self);
        let k_dot_v = axis.dot(self);
        Self::new(
            self.s_z * c + k_cross_v.s_z * s + axis.s_z * k_dot_v * (1.0 - c),
            self.s_x * c + k_cross_v.s_x * s + axis.s_x * k_dot_v * (1.0 - c),
            self.s_y * c + k_cross_v.s_y * s + axis.s_y * k_dot_v * (1.0 - c),
        )
    }
}

/// A pure emitted state.
///
/// `Planar` is `cos(theta)|0_Z> + sin(theta)|1_Z>`. `General` is
/// `e^{i gamma} (sqrt(u)|0> + e^{i phi} sqrt(1-u)|1>)` in the computational
/// basis (or in whichever basis the caller is working in).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QubitState {
    Planar { theta: f64 },
    General { u: f64, gamma: f64, phi: f64 },
}

impl QubitState {
    pub fn planar(theta: f64) -> Self {
        Self::Planar { theta }
    }

    /// Builds a state from two amplitudes; the vector is normalised first.
    pub fn from_amplitudes(amps: [Complex64; 2]) -> Result<Self> {
        let norm = (amps[0].norm_sqr() + amps[1].norm_sqr()).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(domain("QubitState", "zero or non-finite amplitude vector"));
        }
        let a = amps[0] / norm;
        let b = amps[1] / norm;
        let gamma = if a.norm() > 0.0 { a.arg() } else { b.arg() };
        let phi = if a.norm() > 0.0 && b.norm() > 0.0 {
            b.arg() - a.arg()
        } else {
            0.0
        };
        Ok(Self::General {
            u: a.norm_sqr().clamp(0.0, 1.0),
            gamma,
            phi,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Planar { theta } if theta.is_finite() => Ok(()),
            Self::General { u, gamma, phi }
                if (0.0..=1.0).contains(&u) && gamma.is_finite() && phi.is_finite() =>
            {
                Ok(())
            }
            _ => Err(domain("QubitState", format!("invalid state {self:?}"))),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 2] {
        match *self {
            Self::Planar { theta } => [
                Complex64::new(theta.cos(), 0.0),
                Complex64::new(theta.sin(), 0.0),
            ],
            Self::General { u, gamma, phi } => {
                let global = Complex64::from_polar(1.0, gamma);
                [
                    global * u.sqrt(),
                    global * Complex64::from_polar((1.0 - u).max(0.0).sqrt(), phi),
                ]
            }
        }
    }

    pub fn bloch(&self) -> BlochVector {
        bloch_from_state(self)
    }

    pub fn density_matrix(&self) -> Matrix2<Complex64> {
        let [a, b] = self.amplitudes();
        Matrix2::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj())
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &QubitState) -> Complex64 {
        let x = self.amplitudes();
        let y = other.amplitudes();
        x[0].conj() * y[0] + x[1].conj() * y[1]
    }
}

/// Bloch vector of an emitted state.
pub fn bloch_from_state(state: &QubitState) -> BlochVector {
    match *state {
        QubitState::Planar { theta } => {
            BlochVector::new((2.0 * theta).cos(), (2.0 * theta).sin(), 0.0)
        }
        QubitState::General { .. } => bloch_from_amplitudes(state.amplitudes()),
    }
}

fn bloch_from_amplitudes([a, b]: [Complex64; 2]) -> BlochVector {
    let cross = a.conj() * b;
    BlochVector::new(a.norm_sqr() - b.norm_sqr(), 2.0 * cross.re, 2.0 * cross.im)
}

/// The two virtual states obtained when the key ancilla is measured in the
/// complementary basis, with their conditional weights `p_{vir_alpha|Z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualStates {
    pub amplitudes: [[Complex64; 2]; 2],
    pub bloch: [BlochVector; 2],
    pub weights: [f64; 2],
}

/// `|vir_alpha> ~ |psi_0> + (-1)^alpha e^{i phi} |psi_1>`.
pub fn virtual_states_pm(
    state0: &QubitState,
    state1: &QubitState,
    phi: f64,
) -> Result<VirtualStates> {
    state0.validate()?;
    state1.validate()?;
    let overlap = state0.overlap(state1);
    if (overlap.norm() - 1.0).abs() < 1e-12 {
        return Err(Error::DegenerateStates {
            overlap: overlap.norm(),
        });
    }
    let a = state0.amplitudes();
    let b = state1.amplitudes();
    let rot = Complex64::from_polar(1.0, phi);
    let shifted = (rot * overlap).re;

    let mut amplitudes = [[C0; 2]; 2];
    let mut bloch = [BlochVector::new(0.0, 0.0, 0.0); 2];
    let mut weights = [0.0; 2];
    for (alpha, sign) in [(0usize, 1.0), (1, -1.0)] {
        let raw = [a[0] + sign * rot * b[0], a[1] + sign * rot * b[1]];
        let norm = (raw[0].norm_sqr() + raw[1].norm_sqr()).sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateStates {
                overlap: overlap.norm(),
            });
        }
        let v = [raw[0] / norm, raw[1] / norm];
        amplitudes[alpha] = v;
        bloch[alpha] = bloch_from_amplitudes(v);
        weights[alpha] = 0.5 * (1.0 + sign * shifted);
    }
    Ok(VirtualStates {
        amplitudes,
        bloch,
        weights,
    })
}

/// Relative phase that keeps both virtual states on the common plane.
///
/// The states must be written in the basis whose pole is the plane normal,
/// so that they share the same `u`. Adding `pi` to the result only swaps the
/// two virtual states; the representative in `(-pi/2, pi/2]` is returned so
/// that untilted planar states give `phi = 0`. Key states given in planar
/// form always give `0`.
pub fn choose_phi(states: &[QubitState; 3]) -> f64 {
    if states[..2]
        .iter()
        .all(|s| matches!(s, QubitState::Planar { .. }))
    {
        return 0.0;
    }
    let parts = |s: &QubitState| -> (f64, f64) {
        let [a, b] = s.amplitudes();
        let gamma = if a.norm() > 0.0 { a.arg() } else { 0.0 };
        let rel = if a.norm() > 0.0 && b.norm() > 0.0 {
            b.arg() - a.arg()
        } else {
            0.0
        };
        (gamma, rel)
    };
    let (g0, f0) = match states[0] {
        QubitState::General { gamma, phi, .. } => (gamma, phi),
        ref s => parts(s),
    };
    let (g1, f1) = match states[1] {
        QubitState::General { gamma, phi, .. } => (gamma, phi),
        ref s => parts(s),
    };
    wrap_half_turn(g0 - g1 + 0.5 * (f0 - f1))
}

fn wrap_half_turn(x: f64) -> f64 {
    let mut y = x.rem_euclid(PI);
    if y > FRAC_PI_2 + 1e-15 {
        y -= PI;
    }
    y
}

/// Plane through three Bloch endpoints: unit normal and the common
/// projection of every endpoint onto it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: BlochVector,
    pub s_y_tilde: f64,
}

impl Plane {
    /// The standard `XZ` plane.
    pub const XZ: Plane = Plane {
        normal: BlochVector::new(0.0, 0.0, 1.0),
        s_y_tilde: 0.0,
    };

    /// Orthonormal in-plane axes `(Z~, X~)` with `X~ = n x Z~`.
    pub fn in_plane_axes(&self) -> (BlochVector, BlochVector) {
        let n = self.normal;
        let z = BlochVector::new(1.0, 0.0, 0.0);
        let x = BlochVector::new(0.0, 1.0, 0.0);
        let seed = if n.dot(&z).abs() < 1.0 - 1e-6 { z } else { x };
        let proj = seed.sub(&n.scale(seed.dot(&n)));
        let e1 = proj.scale(1.0 / proj.norm());
        let e2 = n.cross(&e1);
        (e1, e2)
    }

    /// Amplitudes of the two poles `|0_Y~>` (Bloch vector `n`) and `|1_Y~>`.
    pub fn pole_states(&self) -> [[Complex64; 2]; 2] {
        let n = self.normal;
        let polar = n.s_z.clamp(-1.0, 1.0).acos();
        let azimuth = n.s_y.atan2(n.s_x);
        let (s, c) = (0.5 * polar).sin_cos();
        [
            [
                Complex64::new(c, 0.0),
                Complex64::from_polar(s, azimuth),
            ],
            [
                -Complex64::from_polar(s, -azimuth),
                Complex64::new(c, 0.0),
            ],
        ]
    }
}

pub fn find_common_plane(states: &[BlochVector; 3]) -> Result<Plane> {
    let d1 = states[1].sub(&states[0]);
    let d2 = states[2].sub(&states[0]);
    let cross = d1.cross(&d2);
    let magnitude = cross.norm();
    if magnitude < COLLINEAR_TOLERANCE {
        return Err(Error::CollinearStates { magnitude });
    }
    let mut normal = cross.scale(1.0 / magnitude);
    let mut s_y_tilde = normal.dot(&states[0]);
    let flip = if s_y_tilde.abs() > 1e-12 {
        s_y_tilde < 0.0
    } else {
        let comps = [normal.s_z, normal.s_x, normal.s_y];
        let largest = comps
            .iter()
            .copied()
            .fold(0.0_f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
        largest < 0.0
    };
    if flip {
        normal = normal.scale(-1.0);
        s_y_tilde = -s_y_tilde;
    }
    Ok(Plane { normal, s_y_tilde })
}

/// Which actual states carry a `pos` or `neg` tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Pos,
    Neg,
}

/// Signed decomposition `target = c_pos rho_pos - c_neg rho_neg` with
/// `rho_t = sum_{j in S_t} p_{j|t} rho_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosNegDecomposition {
    pub coeffs: Vec<f64>,
    pub c_pos: f64,
    pub c_neg: f64,
    pub s_pos: Vec<usize>,
    pub s_neg: Vec<usize>,
    pub p_given_pos: Vec<f64>,
    pub p_given_neg: Vec<f64>,
}

impl PosNegDecomposition {
    pub fn from_coefficients(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(domain("PosNegDecomposition", "non-finite coefficient"));
        }
        let coeffs: Vec<f64> = coeffs
            .into_iter()
            .map(|c| if c.abs() < ZERO_COEFFICIENT { 0.0 } else { c })
            .collect();
        let s_pos: Vec<usize> = (0..coeffs.len()).filter(|&j| coeffs[j] > 0.0).collect();
        let s_neg: Vec<usize> = (0..coeffs.len()).filter(|&j| coeffs[j] < 0.0).collect();
        let c_pos: f64 = s_pos.iter().map(|&j| coeffs[j]).sum();
        let c_neg: f64 = s_neg.iter().map(|&j| -coeffs[j]).sum();
        let sum = c_pos - c_neg;
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::NotUnitTrace { sum });
        }
        let weights = |set: &[usize], total: f64| -> Vec<f64> {
            let mut p = vec![0.0; coeffs.len()];
            for &j in set {
                p[j] = coeffs[j].abs() / total;
            }
            p
        };
        let p_given_pos = weights(&s_pos, c_pos);
        let p_given_neg = weights(&s_neg, c_neg);
        Ok(Self {
            coeffs,
            c_pos,
            c_neg,
            s_pos,
            s_neg,
            p_given_pos,
            p_given_neg,
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn c(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Pos => self.c_pos,
            Sign::Neg => self.c_neg,
        }
    }

    pub fn support(&self, sign: Sign) -> &[usize] {
        match sign {
            Sign::Pos => &self.s_pos,
            Sign::Neg => &self.s_neg,
        }
    }

    /// `p_{j|t}`, zero outside the support of `t`.
    pub fn p_given(&self, j: usize, sign: Sign) -> f64 {
        match sign {
            Sign::Pos => self.p_given_pos[j],
            Sign::Neg => self.p_given_neg[j],
        }
    }

    /// Max-abs entry of `sum_j c_j rho_j - target`.
    pub fn reconstruction_residual(
        &self,
        basis: &[DMatrix<Complex64>],
        target: &DMatrix<Complex64>,
    ) -> f64 {
        let mut acc = -target.clone();
        for (c, rho) in self.coeffs.iter().zip(basis) {
            acc += rho * Complex64::new(*c, 0.0);
        }
        acc.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Closed-form inverse by the adjugate; the caller has checked `det`.
fn inverse3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, entry) in row.iter_mut().enumerate() {
            // cofactor of (c, r) for the transpose
            let rows: Vec<usize> = (0..3).filter(|&i| i != c).collect();
            let cols: Vec<usize> = (0..3).filter(|&i| i != r).collect();
            let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]]
                - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            *entry = sign * minor / det;
        }
    }
    inv
}

/// Decomposes `target` into the three basis states.
///
/// With `plane = None` the states are taken to lie in the `XZ` plane and the
/// unknowns are `(I, Z, X)`. With a plane, the unknowns are the modified
/// operators `(I + S~_Y Y~, Z~, X~)` of that plane.
pub fn decompose(
    target: &BlochVector,
    basis_states: &[BlochVector; 3],
    plane: Option<&Plane>,
) -> Result<PosNegDecomposition> {
    let plane = plane.copied().unwrap_or(Plane::XZ);
    let (e1, e2) = plane.in_plane_axes();
    let n = plane.normal;

    let off_plane = |v: &BlochVector| -> Option<f64> {
        let h = v.dot(&n);
        ((h - plane.s_y_tilde).abs() > PLANE_TOLERANCE).then_some(h)
    };
    for v in basis_states.iter().chain(std::iter::once(target)) {
        if let Some(h) = off_plane(v) {
            return Err(Error::PlaneMismatch {
                target: h,
                plane: plane.s_y_tilde,
            });
        }
    }

    let mut s = [[0.0; 3]; 3];
    for (row, v) in s.iter_mut().zip(basis_states) {
        *row = [0.5, 0.5 * v.dot(&e1), 0.5 * v.dot(&e2)];
    }
    let det = det3(&s);
    if !(det.abs() >= SINGULAR_DETERMINANT) {
        return Err(Error::SingularBasis {
            determinant: det.abs(),
        });
    }
    let inv = inverse3(&s, det);
    let row = [0.5, 0.5 * target.dot(&e1), 0.5 * target.dot(&e2)];
    let coeffs: Vec<f64> = (0..3)
        .map(|c| (0..3).map(|k| row[k] * inv[k][c]).sum())
        .collect();
    PosNegDecomposition::from_coefficients(coeffs)
}

/// Decompositions of both virtual states of one party.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyDecomposition {
    pub states: [QubitState; 3],
    pub plane: Plane,
    pub phi: f64,
    pub virtual_states: VirtualStates,
    pub decompositions: [PosNegDecomposition; 2],
}

impl PartyDecomposition {
    /// Runs the full construction for states `[key0, key1, test]`.
    ///
    /// States given in planar form use the `XZ` plane and `phi = 0`; any
    /// other input goes through the common-plane route.
    pub fn new(states: [QubitState; 3]) -> Result<Self> {
        for s in &states {
            s.validate()?;
        }
        let bloch = states.map(|s| bloch_from_state(&s));
        let all_planar = states
            .iter()
            .all(|s| matches!(s, QubitState::Planar { .. }));

        let plane = find_common_plane(&bloch)?;
        let (plane, phi, plane_arg) = if all_planar {
            (Plane::XZ, 0.0, None)
        } else {
            let poles = plane.pole_states();
            let in_plane_basis = states.map(|s| {
                let amps = s.amplitudes();
                let a = poles[0][0].conj() * amps[0] + poles[0][1].conj() * amps[1];
                let b = poles[1][0].conj() * amps[0] + poles[1][1].conj() * amps[1];
                QubitState::from_amplitudes([a, b]).unwrap_or(QubitState::General {
                    u: 1.0,
                    gamma: 0.0,
                    phi: 0.0,
                })
            });
            (plane, choose_phi(&in_plane_basis), Some(plane))
        };

        let virtual_states = virtual_states_pm(&states[0], &states[1], phi)?;
        let d0 = decompose(&virtual_states.bloch[0], &bloch, plane_arg.as_ref())?;
        let d1 = decompose(&virtual_states.bloch[1], &bloch, plane_arg.as_ref())?;
        Ok(Self {
            states,
            plane,
            phi,
            virtual_states,
            decompositions: [d0, d1],
        })
    }

    pub fn weights(&self) -> [f64; 2] {
        self.virtual_states.weights
    }
}

/// Bell-state announcement of the MDI relay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellOutcome {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellOutcome {
    /// Virtual-state pairs `(alpha, beta)` that constitute a phase error.
    pub fn phase_error_pairs(self) -> [(usize, usize); 2] {
        match self {
            Self::PsiMinus | Self::PhiMinus => [(0, 0), (1, 1)],
            Self::PsiPlus | Self::PhiPlus => [(0, 1), (1, 0)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::PsiMinus => "psi-",
            Self::PsiPlus => "psi+",
            Self::PhiMinus => "phi-",
            Self::PhiPlus => "phi+",
        }
    }
}

/// Phase-error operator decomposed over the nine joint indices `3*j + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDecomposition {
    pub outcome: BellOutcome,
    pub decomposition: PosNegDecomposition,
    pub p_ph_given_key: f64,
}

pub const fn joint_index(j: usize, s: usize) -> usize {
    3 * j + s
}

pub fn mdi_joint_coefficients(
    alice: &[PosNegDecomposition; 2],
    bob: &[PosNegDecomposition; 2],
    alice_weights: [f64; 2],
    bob_weights: [f64; 2],
    outcome: BellOutcome,
) -> Result<JointDecomposition> {
    for (name, w) in [("alice_weights", alice_weights), ("bob_weights", bob_weights)] {
        if w.iter().any(|x| !(0.0..=1.0).contains(x)) || (w[0] + w[1] - 1.0).abs() > 1e-9 {
            return Err(domain("mdi_joint_coefficients", format!("{name} {w:?}")));
        }
    }
    if alice.iter().chain(bob).any(|d| d.len() != 3) {
        return Err(domain(
            "mdi_joint_coefficients",
            "single-party decompositions must have three coefficients",
        ));
    }
    let pairs = outcome.phase_error_pairs();
    let p_ph: f64 = pairs
        .iter()
        .map(|&(a, b)| alice_weights[a] * bob_weights[b])
        .sum();
    if p_ph <= 0.0 {
        return Err(domain("mdi_joint_coefficients", "phase-error weight is zero"));
    }
    let mut coeffs = vec![0.0; 9];
    for &(a, b) in &pairs {
        let w = alice_weights[a] * bob_weights[b] / p_ph;
        for j in 0..3 {
            for s in 0..3 {
                coeffs[joint_index(j, s)] += w * alice[a].coeffs[j] * bob[b].coeffs[s];
            }
        }
    }
    Ok(JointDecomposition {
        outcome,
        decomposition: PosNegDecomposition::from_coefficients(coeffs)?,
        p_ph_given_key: p_ph,
    })
}

/// `(sum over phase-error pairs of p_a p_b rho_a (x) rho_b) / p_ph`.
pub fn phase_error_operator(
    alice_virtual: &VirtualStates,
    bob_virtual: &VirtualStates,
    outcome: BellOutcome,
) -> DMatrix<Complex64> {
    let pairs = outcome.phase_error_pairs();
    let mut acc = DMatrix::<Complex64>::zeros(4, 4);
    let mut p_ph = 0.0;
    for &(a, b) in &pairs {
        let w = alice_virtual.weights[a] * bob_virtual.weights[b];
        p_ph += w;
        let ra = alice_virtual.bloch[a].density_matrix();
        let rb = bob_virtual.bloch[b].density_matrix();
        let k = ra.kronecker(&rb);
        acc += DMatrix::from_fn(4, 4, |r, c| k[(r, c)] * w);
    }
    acc.map(|z| z / p_ph)
}

/// Dynamic copy of a 2x2 density matrix, for residual checks.
pub fn to_dynamic(m: &Matrix2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(2, 2, |r, c| m[(r, c)])
}

/// `rho_j (x) rho'_s` over the nine joint indices.
pub fn joint_basis(alice: &[QubitState; 3], bob: &[QubitState; 3]) -> Vec<DMatrix<Complex64>> {
    let mut out = Vec::with_capacity(9);
    for a in alice {
        for b in bob {
            let k = a.density_matrix().kronecker(&b.density_matrix());
            out.push(DMatrix::from_fn(4, 4, |r, c| k[(r, c)]));
        }
    }
    out
}
