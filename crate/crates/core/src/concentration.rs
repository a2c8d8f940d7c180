//! Concentration bounds for sums of dependent Bernoulli variables, and the
//! reweighted phase-error estimates built on them.
//!
//! Two inequalities are provided. Azuma's has a single symmetric deviation
//! `sqrt(2 N ln(1/eps))`. Kato's takes a free pair `(a, b)` with `b >= |a|`
//! tied to the failure probability through
//!
//! ```text
//! b^2 - a^2 = (ln(1/eps) / 2) (1 +/- 4a / (3 sqrt N))^2
//! ```
//!
//! and is tight when the pair is tuned to a predicted outcome. The pair is
//! computed from the known closed-form optimum and cross-checked against an
//! exact stationary-point solve of the same problem.

use crate::error::{domain, Error, Result};

/// Relative disagreement between closed form and stationary solve above
/// which the stationary solution is used.
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-4;

/// Allowed relative mismatch of the failure-probability constraint.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Azuma,
    Kato,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Upper bound on the sum of conditional probabilities.
    UpperOnSum,
    /// Lower bound on the sum of conditional probabilities.
    LowerOnSum,
    /// Upper bound on the realised count, given an upper bound on the sum.
    UpperOnCount,
}

impl Direction {
    /// Sign in front of `4a / (3 sqrt N)` in the constraint.
    fn constraint_sign(self) -> f64 {
        match self {
            Self::UpperOnSum => 1.0,
            Self::LowerOnSum | Self::UpperOnCount => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependentBoundResult {
    pub bound: f64,
    pub method: Method,
    pub direction: Direction,
    pub delta: f64,
}

/// `sqrt(2 n ln(1/eps))`; `eps = 1` gives zero.
pub fn azuma_delta(n: f64, eps: f64) -> Result<f64> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(domain("azuma_delta", format!("trial count {n}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(domain("azuma_delta", format!("eps = {eps} must lie in (0, 1]")));
    }
    Ok((2.0 * n * (-eps.ln())).sqrt())
}

pub fn azuma_bound(direction: Direction, n: f64, eps: f64, observed: f64) -> Result<DependentBoundResult> {
    let delta = azuma_delta(n, eps)?;
    let bound = match direction {
        Direction::UpperOnSum | Direction::UpperOnCount => observed + delta,
        Direction::LowerOnSum => observed - delta,
    };
    Ok(DependentBoundResult {
        bound,
        method: Method::Azuma,
        direction,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSource {
    ClosedForm,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatoParams {
    pub a: f64,
    pub b: f64,
    pub n: f64,
    pub eps: f64,
    pub prediction: f64,
    pub direction: Direction,
    pub source: ParamSource,
}

impl KatoParams {
    /// Deviation (or bound, for counts) the pair yields when the observation
    /// equals the prediction.
    pub fn objective(&self) -> f64 {
        objective_ab(self.direction, self.n, self.prediction, self.a, self.b)
    }

    /// `|b^2 - a^2 - h (1 + c a)^2|` relative to `max(b^2, h)`, with
    /// `h = ln(1/eps) / 2`.
    pub fn constraint_residual(&self) -> f64 {
        let k = Constraint::new(self.direction, self.n, self.eps);
        let lhs = self.b * self.b - self.a * self.a;
        let rhs = k.h * k.scale(self.a).powi(2);
        (lhs - rhs).abs() / (self.b * self.b).max(k.h).max(f64::MIN_POSITIVE)
    }

    /// `1 + c a`, the base of the constraint's denominator.
    pub fn scale(&self) -> f64 {
        Constraint::new(self.direction, self.n, self.eps).scale(self.a)
    }
}

fn objective_ab(direction: Direction, n: f64, prediction: f64, a: f64, b: f64) -> f64 {
    let r = n.sqrt();
    match direction {
        Direction::UpperOnSum | Direction::LowerOnSum => (b + a * (2.0 * prediction / n - 1.0)) * r,
        Direction::UpperOnCount => n / (r - 2.0 * a) * (prediction / r + b - a),
    }
}

/// Constants of `b(a)^2 = A a^2 + 2 B a + h`.
struct Constraint {
    h: f64,
    c: f64,
    a2: f64,
    b1: f64,
}

impl Constraint {
    fn new(direction: Direction, n: f64, eps: f64) -> Self {
        let h = -eps.ln() / 2.0;
        let c = direction.constraint_sign() * 4.0 / (3.0 * n.sqrt());
        Self {
            h,
            c,
            a2: 1.0 + h * c * c,
            b1: h * c,
        }
    }

    fn scale(&self, a: f64) -> f64 {
        1.0 + self.c * a
    }

    /// Edge of the region `1 + c a >= 0`, where the bound becomes trivial.
    fn boundary(&self) -> (f64, f64) {
        let a = -1.0 / self.c;
        (a, a.abs())
    }

    fn b(&self, a: f64) -> f64 {
        (self.a2 * a * a + 2.0 * self.b1 * a + self.h).max(0.0).sqrt()
    }
}

/// The mode's objective with `b` eliminated through the constraint.
pub fn kato_objective(direction: Direction, n: f64, prediction: f64, eps: f64, a: f64) -> f64 {
    let b = Constraint::new(direction, n, eps).b(a);
    objective_ab(direction, n, prediction, a, b)
}

fn check_kato_inputs(direction: Direction, n: f64, prediction: f64, eps: f64) -> Result<()> {
    if !(n.is_finite() && n > 0.0) {
        return Err(domain("kato_params", format!("trial count {n} must be positive")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(domain("kato_params", format!("eps = {eps} must lie in (0, 1]")));
    }
    let ok = prediction.is_finite()
        && prediction >= 0.0
        && (direction == Direction::UpperOnCount || prediction <= n);
    if !ok {
        return Err(domain(
            "kato_params",
            format!("prediction {prediction} outside [0, {n}]"),
        ));
    }
    Ok(())
}

/// The published closed-form optimum, with every trial count read as `N`.
pub fn kato_closed_form(direction: Direction, n: f64, prediction: f64, eps: f64) -> (f64, f64) {
    let l = eps.ln();
    let r = n.sqrt();
    let a = match direction {
        Direction::UpperOnSum | Direction::LowerOnSum => {
            let sign = if direction == Direction::UpperOnSum { 1.0 } else { -1.0 };
            let var = prediction * (n - prediction);
            let inner = 9.0 * var - 2.0 * n * l;
            let root = (-n * n * l * inner).max(0.0).sqrt();
            let num = 3.0
                * (sign * (72.0 * r * var * l - 16.0 * n * r * l * l)
                    + 9.0 * std::f64::consts::SQRT_2 * (n - 2.0 * prediction) * root);
            let den = 4.0 * (9.0 * n - 8.0 * l) * inner;
            num / den
        }
        Direction::UpperOnCount => {
            let s = prediction;
            let root = (n * l * (n * l + 18.0 * s * (s - n))).max(0.0).sqrt();
            let num = 3.0
                * r
                * (9.0 * l * (3.0 * n * n - 8.0 * n * s + 8.0 * s * s)
                    + 9.0 * (n - 2.0 * s) * root
                    + 4.0 * n * l * l);
            let den = 4.0
                * (36.0 * l * (n * n - 2.0 * n * s + 2.0 * s * s)
                    + 4.0 * n * l * l
                    + 81.0 * n * s * (n - s));
            num / den
        }
    };
    let lin = match direction {
        Direction::UpperOnSum => 24.0 * a * r,
        Direction::LowerOnSum | Direction::UpperOnCount => -24.0 * a * r,
    };
    let b = (18.0 * a * a * n - (16.0 * a * a + lin + 9.0 * n) * l).max(0.0).sqrt()
        / (3.0 * (2.0 * n).sqrt());
    (a, b)
}

/// Exact stationary point of the mode's objective.
///
/// For the sum modes the objective is convex in `a` and the stationary point
/// is unique; if it lies where `1 + c a < 0` the edge of that region is
/// returned instead. For the count mode the stationarity condition reduces to
/// `P a + Q = q b(a)`, which is solved by squaring and keeping the root
/// with the right sign and the smallest objective.
pub fn kato_stationary(direction: Direction, n: f64, prediction: f64, eps: f64) -> Option<(f64, f64)> {
    let k = Constraint::new(direction, n, eps);
    if k.h == 0.0 {
        return Some((0.0, 0.0));
    }
    let r = n.sqrt();
    match direction {
        Direction::UpperOnSum | Direction::LowerOnSum => {
            let m = 2.0 * prediction / n - 1.0;
            let gap = k.a2 - m * m;
            if gap <= 0.0 {
                return None;
            }
            let a = (-k.b1 - m * (k.h / gap).sqrt()) / k.a2;
            if k.scale(a) < 0.0 {
                return Some(k.boundary());
            }
            Some((a, k.b(a)))
        }
        Direction::UpperOnCount => {
            let p = k.a2 * r + 2.0 * k.b1;
            let q0 = k.b1 * r + 2.0 * k.h;
            let q = r - 2.0 * prediction / r;
            let qa = p * p - q * q * k.a2;
            let qb = 2.0 * (p * q0 - q * q * k.b1);
            let qc = q0 * q0 - q * q * k.h;
            let mut roots = Vec::with_capacity(2);
            if qa.abs() < 1e-300 {
                if qb != 0.0 {
                    roots.push(-qc / qb);
                }
            } else {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    // numerically stable pair
                    let t = -0.5 * (qb + qb.signum() * sq);
                    if t != 0.0 {
                        roots.push(t / qa);
                        roots.push(qc / t);
                    } else {
                        roots.push(-qb / (2.0 * qa));
                    }
                }
            }
            roots
                .into_iter()
                .filter(|a| a.is_finite() && *a < r / 2.0)
                .filter(|a| {
                    let lhs = p * a + q0;
                    let rhs = q * k.b(*a);
                    (lhs - rhs).abs() <= 1e-8 * (lhs.abs() + rhs.abs()).max(1e-300)
                })
                .map(|a| (a, k.b(a)))
                .filter(|&(a, b)| objective_ab(direction, n, prediction, a, b).is_finite())
                .min_by(|x, y| {
                    let fx = objective_ab(direction, n, prediction, x.0, x.1);
                    let fy = objective_ab(direction, n, prediction, y.0, y.1);
                    fx.total_cmp(&fy)
                })
        }
    }
}

fn admissible(p: &KatoParams) -> bool {
    let r = p.n.sqrt();
    p.a.is_finite()
        && p.b.is_finite()
        && p.b >= p.a.abs() - 1e-12
        && p.scale() >= 0.0
        && (p.direction != Direction::UpperOnCount || p.a < r / 2.0)
        && p.constraint_residual() <= CONSTRAINT_TOLERANCE
        && p.objective().is_finite()
}

/// Optimal `(a, b)` for a predicted observation.
pub fn kato_params(direction: Direction, n: f64, prediction: f64, eps: f64) -> Result<KatoParams> {
    check_kato_inputs(direction, n, prediction, eps)?;
    let make = |(a, b): (f64, f64), source| KatoParams {
        a,
        b,
        n,
        eps,
        prediction,
        direction,
        source,
    };
    if eps == 1.0 {
        return Ok(make((0.0, 0.0), ParamSource::Stationary));
    }
    let closed = make(kato_closed_form(direction, n, prediction, eps), ParamSource::ClosedForm);
    let stationary = kato_stationary(direction, n, prediction, eps)
        .map(|ab| make(ab, ParamSource::Stationary))
        .filter(admissible);
    match (admissible(&closed), stationary) {
        (true, Some(s)) => {
            let (fc, fs) = (closed.objective(), s.objective());
            if (fc - fs).abs() <= CLOSED_FORM_TOLERANCE * fs.abs().max(f64::MIN_POSITIVE) {
                Ok(closed)
            } else if fs < fc {
                Ok(s)
            } else {
                Ok(closed)
            }
        }
        (true, None) => Ok(closed),
        (false, Some(s)) => Ok(s),
        (false, None) => Err(Error::InfeasibleParams(format!(
            "{direction:?} with n = {n}, prediction = {prediction}, eps = {eps}"
        ))),
    }
}

/// Applies a tuned pair to an observation.
pub fn kato_bound(params: &KatoParams, observed: f64) -> Result<DependentBoundResult> {
    let n = params.n;
    let r = n.sqrt();
    if !observed.is_finite() {
        return Err(domain("kato_bound", "non-finite observation"));
    }
    let (bound, delta) = match params.direction {
        Direction::UpperOnSum | Direction::LowerOnSum => {
            let delta = (params.b + params.a * (2.0 * observed / n - 1.0)) * r;
            let bound = if params.direction == Direction::UpperOnSum {
                observed + delta
            } else {
                observed - delta
            };
            (bound, delta)
        }
        Direction::UpperOnCount => {
            if params.a >= r / 2.0 {
                return Err(domain(
                    "kato_bound",
                    format!("a = {} exceeds sqrt(n)/2 = {}", params.a, r / 2.0),
                ));
            }
            let bound = n / (r - 2.0 * params.a) * (observed / r + params.b - params.a);
            (bound, bound - observed)
        }
    };
    Ok(DependentBoundResult {
        bound,
        method: Method::Kato,
        direction: params.direction,
        delta,
    })
}

/// One observed count entering a reweighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReweightedTerm {
    pub weight: f64,
    pub observed: f64,
    pub predicted: f64,
}

/// `sum_i weight_i * count_i` over one sequence of `trials` rounds, plus
/// the prediction of the final count it bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightedSum {
    pub terms: Vec<ReweightedTerm>,
    pub trials: f64,
}

impl ReweightedSum {
    pub fn exact(&self) -> f64 {
        self.terms.iter().map(|t| t.weight * t.observed).sum()
    }
}

/// A full phase-error estimate: one or more reweighted sums whose upper
/// bounds are added, and the number of inequality applications charged.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseErrorSums {
    pub sums: Vec<ReweightedSum>,
    pub applications: u32,
}

/// Azuma route. Returns the phase-error upper bound and the total failure
/// probability `applications * eps_a`.
pub fn phase_errors_azuma(input: &PhaseErrorSums, eps_a: f64) -> Result<(f64, f64)> {
    let mut total = 0.0;
    for sum in &input.sums {
        let delta = azuma_delta(sum.trials, eps_a)?;
        let mut s = 0.0;
        for t in sum.terms.iter().filter(|t| t.weight != 0.0) {
            s += t.weight * (t.observed + t.weight.signum() * delta);
        }
        total += (s + delta).max(0.0).min(sum.trials.max(0.0));
    }
    Ok((total, input.applications as f64 * eps_a))
}

fn kato_sum(sum: &ReweightedSum, eps: f64, use_prediction: bool) -> Result<f64> {
    let n = sum.trials;
    let mut s = 0.0;
    for t in sum.terms.iter().filter(|t| t.weight != 0.0) {
        let x = if use_prediction { t.predicted } else { t.observed };
        let direction = if t.weight > 0.0 {
            Direction::UpperOnSum
        } else {
            Direction::LowerOnSum
        };
        let params = kato_params(direction, n, t.predicted.clamp(0.0, n), eps)?;
        s += t.weight * kato_bound(&params, x)?.bound.clamp(0.0, n);
    }
    Ok(s)
}

/// Kato route with predictions taken from each term. Returns the bound and
/// the total failure probability `applications * eps_k`.
pub fn phase_errors_kato(input: &PhaseErrorSums, eps_k: f64) -> Result<(f64, f64)> {
    let mut total = 0.0;
    for sum in &input.sums {
        let n = sum.trials;
        if n <= 0.0 {
            continue;
        }
        let observed = kato_sum(sum, eps_k, false)?.max(0.0);
        let predicted = kato_sum(sum, eps_k, true)?.clamp(0.0, n);
        // with no interior optimum only the trivial bound `n` remains
        total += match kato_params(Direction::UpperOnCount, n, predicted, eps_k) {
            Ok(params) => kato_bound(&params, observed)?.bound.clamp(0.0, n),
            Err(Error::InfeasibleParams(_)) => n,
            Err(e) => return Err(e),
        };
    }
    Ok((total, input.applications as f64 * eps_k))
}
