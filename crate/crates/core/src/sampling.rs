//! Inverse multiplicative Chernoff bounds for random sampling without
//! replacement from an unknown population.
//!
//! A population of `n` events is split at random: each event lands in the
//! second group with probability `1 - p`. Given only the second-group count
//! `K2`, [`g_lower`] and [`g_upper`] bound the first-group count `K1 = n - K2`.
//!
//! Both bounds go through the two real branches of the Lambert W function at
//! `x = -exp(-1 - t)` with `t = ln(1/eps) / K2`. Writing `W = -y` turns this
//! into `y - 1 - ln y = t`, which is solved directly in log-space so that the
//! neighbourhood of the branch point (large `K2`) keeps full precision.

use crate::error::{domain, Result};

/// Distance from `-1/e` below which the branch-point series is used.
pub const BRANCH_POINT_WINDOW: f64 = 1e-8;

const INV_E: f64 = 0.367_879_441_171_442_33;
const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `W_0`, values `>= -1`.
    Principal,
    /// `W_{-1}`, values `<= -1`.
    MinusOne,
}

/// Real-valued Lambert W.
pub fn lambert_w(branch: Branch, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain("lambert_w", format!("non-finite argument {x}")));
    }
    let near_branch = x + INV_E;
    if near_branch < -1e-16 {
        return Err(domain("lambert_w", format!("{x} is below -1/e")));
    }
    if branch == Branch::MinusOne && x >= 0.0 {
        return Err(domain("lambert_w", format!("{x} is outside [-1/e, 0)")));
    }
    if near_branch.abs() < BRANCH_POINT_WINDOW {
        let q = (2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        let q = if branch == Branch::Principal { q } else { -q };
        return Ok(-1.0 + q - q * q / 3.0 + 11.0 / 72.0 * q * q * q);
    }
    if x < 0.0 {
        let t = (-1.0 - (-x).ln()).max(0.0);
        return Ok(match branch {
            Branch::Principal => -lower_root(t),
            Branch::MinusOne => -upper_root(t),
        });
    }
    Ok(principal_nonnegative(x))
}

/// Halley iteration for `w e^w = x`, `x >= 0`.
fn principal_nonnegative(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let l = x.ln_1p();
    let mut w = if x < 3.0 {
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let ll = x.ln();
        ll - ll.ln()
    };
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 1e-15 * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    w
}

/// `exp(s) - 1 - s`, accurate for small `|s|`.
fn expm1_minus_id(s: f64) -> f64 {
    if s.abs() < 1e-3 {
        let s2 = s * s;
        s2 * (0.5 + s * (1.0 / 6.0 + s * (1.0 / 24.0 + s * (1.0 / 120.0 + s / 720.0))))
    } else {
        s.exp_m1() - s
    }
}

/// `d - ln(1 + d)`, accurate for small `d`.
fn id_minus_ln1p(d: f64) -> f64 {
    if d.abs() < 1e-3 {
        let d2 = d * d;
        d2 * (0.5 - d * (1.0 / 3.0 - d * (0.25 - d * (0.2 - d / 6.0))))
    } else {
        d - d.ln_1p()
    }
}

/// Root `y in (0, 1]` of `y - 1 - ln y = t`.
///
/// Newton on the convex, decreasing `G(s) = e^s - 1 - s - t` with `s = ln y`,
/// started left of the root, converges monotonically.
pub(crate) fn lower_root(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let g = |s: f64| expm1_minus_id(s) - t;
    let r = (2.0 * t).sqrt();
    let mut s = -r - t;
    if g(s) < 0.0 {
        s = -1.0 - t - r;
    }
    for _ in 0..MAX_ITER {
        let slope = s.exp_m1();
        if slope == 0.0 {
            break;
        }
        let step = g(s) / slope;
        if !(step < 0.0) {
            break;
        }
        s -= step;
        if -step <= 1e-16 * s.abs() {
            break;
        }
    }
    s.exp()
}

/// Root `y >= 1` of `y - 1 - ln y = t`.
///
/// Newton on the convex, increasing `F(d) = d - ln(1 + d) - t` with
/// `d = y - 1`, started right of the root.
pub(crate) fn upper_root(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let f = |d: f64| id_minus_ln1p(d) - t;
    let r = (2.0 * t).sqrt();
    let mut d = t + r + (1.0 + t + r).ln();
    while f(d) < 0.0 {
        d *= 2.0;
    }
    for _ in 0..MAX_ITER {
        let slope = d / (1.0 + d);
        if slope == 0.0 {
            break;
        }
        let step = f(d) / slope;
        if !(step > 0.0) {
            break;
        }
        d -= step;
        if step <= 1e-16 * d.abs() {
            break;
        }
    }
    1.0 + d
}

/// Interval `[K2 y0, K2 y1]` on the expectation of `K2` implied by one
/// observation, each side failing with probability at most `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationInterval {
    pub lower: f64,
    pub upper: f64,
}

pub fn expectation_interval(k2: f64, eps: f64) -> Result<ExpectationInterval> {
    check_count(k2)?;
    check_eps(eps)?;
    if k2 == 0.0 {
        return Ok(ExpectationInterval {
            lower: 0.0,
            upper: -eps.ln(),
        });
    }
    let t = -eps.ln() / k2;
    Ok(ExpectationInterval {
        lower: k2 * lower_root(t),
        upper: k2 * upper_root(t),
    })
}

fn check_count(k2: f64) -> Result<()> {
    if k2.is_finite() && k2 >= 0.0 {
        Ok(())
    } else {
        Err(domain("sampling bound", format!("count {k2} must be finite and >= 0")))
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(domain("sampling bound", format!("p = {p} must lie in (0, 1)")))
    }
}

/// `eps = 1` is accepted as the zero-deviation limit.
fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(domain("sampling bound", format!("eps = {eps} must lie in (0, 1]")))
    }
}

/// Lower bound on `K1` for a real-valued second-group count.
pub fn g_lower_real(k2: f64, p: f64, eps: f64) -> Result<f64> {
    check_p(p)?;
    let e = expectation_interval(k2, eps)?;
    if k2 == 0.0 {
        return Ok(0.0);
    }
    Ok((e.lower / (1.0 - p) - k2).max(0.0))
}

/// Upper bound on `K1` for a real-valued second-group count.
pub fn g_upper_real(k2: f64, p: f64, eps: f64) -> Result<f64> {
    check_p(p)?;
    let e = expectation_interval(k2, eps)?;
    Ok(e.upper / (1.0 - p) - k2)
}

/// Lower bound on `K1`, failing with probability at most `eps`.
pub fn g_lower(k2: u64, p: f64, eps: f64) -> Result<f64> {
    g_lower_real(k2 as f64, p, eps)
}

/// Upper bound on `K1`, failing with probability at most `eps`.
pub fn g_upper(k2: u64, p: f64, eps: f64) -> Result<f64> {
    g_upper_real(k2 as f64, p, eps)
}
