//! Acceptance checks. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ltqkd_core::channel::{
    pm_detection_probability, pm_outcome_probability, pm_sample, seeded_rng, Basis, ChannelParams,
    NOMINAL_DARK_COUNT,
};
use ltqkd_core::concentration::{kato_params, Direction};
use ltqkd_core::config::{
    mdi_states_alice, mdi_states_bob, pm_states, MdiSelection, PmSelection, Protocol,
    ProtocolConfig, Selection,
};
use ltqkd_core::keyrate::{estimate_phase_errors, optimize_rate, Decomposed, EstimationMethod, SearchSpace};
use ltqkd_core::pm::{pm_phase_error_bound, pm_tagging};
use ltqkd_core::qubit::{to_dynamic, BellOutcome, BlochVector, PartyDecomposition, QubitState};
use ltqkd_core::sampling::{g_lower, g_upper};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{Binomial as StatBinomial, Discrete};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, limit: Duration, run: impl FnOnce() -> Outcome) -> bool {
    check_after(id, limit, Duration::ZERO, run)
}

/// `shared` is setup time spent before `run` that counts against the limit.
fn check_after(id: usize, limit: Duration, shared: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = run();
    let took = start.elapsed() + shared;
    let pass = out.pass && took <= limit;
    println!(
        "criterion {id}: {} ({:.2?} of {:?}) {}",
        if pass { "PASS" } else { "FAIL" },
        took,
        limit,
        out.detail
    );
    pass
}

fn three_sigma(eps: f64, trials: u64) -> f64 {
    eps + 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt()
}

fn csc(x: f64) -> f64 {
    1.0 / x.sin()
}

fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

fn closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut exact_ok = true;
    let exact = |p: &PartyDecomposition, want: [[f64; 3]; 2]| {
        (0..2).all(|a| (0..3).all(|j| (p.decompositions[a].coeffs[j] - want[a][j]).abs() < 1e-12))
    };
    let a = PartyDecomposition::new(mdi_states_alice(0.0)).unwrap();
    let b = PartyDecomposition::new(mdi_states_bob(0.0)).unwrap();
    exact_ok &= exact(&a, [[0.0, 0.0, 1.0], [1.0, 1.0, -1.0]]);
    exact_ok &= exact(&b, [[1.0, 1.0, -1.0], [0.0, 0.0, 1.0]]);
    for i in 0..=200 {
        let k = 0.9 + 0.2 * i as f64 / 200.0;
        let delta = (k - 1.0) * PI;
        let q = k * PI / 4.0;
        let h = (k * PI / 2.0).cos();
        let d = 1.0 + 2.0 * h;
        let alice = [
            [0.0, 0.0, 1.0],
            [0.5 * csc(q).powi(2), 0.5 * csc(q).powi(2), -cot(q).powi(2)],
        ];
        let bob = [
            [1.0, 1.0 / d, -1.0 / d],
            [-0.5 * h * csc(q).powi(2), 0.5 * h * csc(q) * csc(3.0 * q), cot(q).powi(2) / d],
        ];
        let pa = PartyDecomposition::new(mdi_states_alice(delta)).unwrap();
        let pb = PartyDecomposition::new(mdi_states_bob(delta)).unwrap();
        for (p, want) in [(&pa, alice), (&pb, bob)] {
            for al in 0..2 {
                for j in 0..3 {
                    worst = worst.max((p.decompositions[al].coeffs[j] - want[al][j]).abs());
                }
            }
        }
    }
    Outcome {
        pass: exact_ok && worst < 1e-9,
        detail: format!("untilted exact: {exact_ok}; max deviation over kappa in [0.9, 1.1]: {worst:.2e} (tol 1e-9)"),
    }
}

fn lift(v: &BlochVector, height: f64) -> QubitState {
    let r = (1.0 - height * height).sqrt();
    let (z, x, y) = (r * v.s_z, r * v.s_x, height);
    QubitState::General {
        u: (0.5 * (1.0 + z)).clamp(0.0, 1.0),
        gamma: 0.0,
        phi: y.atan2(x),
    }
}

fn reconstruction() -> Outcome {
    let mut rng = seeded_rng(2);
    let (mut residual, mut identity): (f64, f64) = (0.0, 0.0);
    let mut done = [0usize; 2];
    for (kind, count) in done.iter_mut().enumerate() {
        while *count < 1000 {
            let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
            let b = t.map(|x| QubitState::planar(x).bloch());
            if b[1].sub(&b[0]).cross(&b[2].sub(&b[0])).norm() < 0.05 {
                continue;
            }
            let states = if kind == 0 {
                t.map(QubitState::planar)
            } else {
                let h = rng.random_range(-0.8..0.8);
                b.map(|v| lift(&v, h))
            };
            let Ok(party) = PartyDecomposition::new(states) else { continue };
            let basis: Vec<_> = states.iter().map(|s| to_dynamic(&s.density_matrix())).collect();
            for alpha in 0..2 {
                let d = &party.decompositions[alpha];
                let target = to_dynamic(&party.virtual_states.bloch[alpha].density_matrix());
                residual = residual.max(d.reconstruction_residual(&basis, &target));
                identity = identity.max((d.c_pos - d.c_neg - 1.0).abs());
            }
            *count += 1;
        }
    }
    Outcome {
        pass: residual < 1e-10 && identity < 1e-10,
        detail: format!(
            "{} planar + {} tilted triples; max residual {residual:.2e}, max |c_pos - c_neg - 1| {identity:.2e} (tol 1e-10)",
            done[0], done[1]
        ),
    }
}

fn chernoff_coverage() -> Outcome {
    let mut worst_exact: f64 = 0.0;
    let mut worst_mc: f64 = f64::NEG_INFINITY;
    let trials = 100_000u64;
    let mut rng = seeded_rng(3);
    let mut pass = true;
    for eps in [0.1, 0.01] {
        for p in [0.1, 0.5, 0.9] {
            for n in 1..=300u64 {
                let dist = StatBinomial::new(1.0 - p, n).unwrap();
                let (mut lo, mut hi) = (0.0, 0.0);
                for k2 in 0..=n {
                    let k1 = (n - k2) as f64;
                    let w = dist.pmf(k2);
                    if k1 < g_lower(k2, p, eps).unwrap() {
                        lo += w;
                    }
                    if k1 > g_upper(k2, p, eps).unwrap() {
                        hi += w;
                    }
                }
                worst_exact = worst_exact.max(lo.max(hi) / eps);
                pass &= lo <= eps + 1e-12 && hi <= eps + 1e-12;
            }
            let n = 5000u64;
            let gl: Vec<f64> = (0..=n).map(|k| g_lower(k, p, eps).unwrap()).collect();
            let gu: Vec<f64> = (0..=n).map(|k| g_upper(k, p, eps).unwrap()).collect();
            let dist = Binomial::new(n, 1.0 - p).unwrap();
            let (mut lo, mut hi) = (0u64, 0u64);
            for _ in 0..trials {
                let k2 = dist.sample(&mut rng);
                let k1 = (n - k2) as f64;
                lo += u64::from(k1 < gl[k2 as usize]);
                hi += u64::from(k1 > gu[k2 as usize]);
            }
            let limit = three_sigma(eps, trials);
            let frac = lo.max(hi) as f64 / trials as f64;
            worst_mc = worst_mc.max(frac - limit);
            pass &= frac <= limit;
        }
    }
    Outcome {
        pass,
        detail: format!(
            "exact n <= 300: worst violation / eps {worst_exact:.3}; MC n = 5000: worst (rate - limit) {worst_mc:.2e}"
        ),
    }
}

/// Direct constrained minimisation over `(a, b)`: the smallest feasible `b`
/// for each `a` is found by bisection on the failure-probability constraint,
/// then the outer variable is scanned and refined by golden section.
struct Minimiser {
    direction: Direction,
    n: f64,
    prediction: f64,
    eps: f64,
}

impl Minimiser {
    fn slack(&self, a: f64, b: f64) -> f64 {
        let sign = if self.direction == Direction::UpperOnSum { 1.0 } else { -1.0 };
        let scale = 1.0 + sign * 4.0 * a / (3.0 * self.n.sqrt());
        -2.0 * (b * b - a * a) / (scale * scale) - self.eps.ln()
    }

    fn min_b(&self, a: f64) -> f64 {
        let (mut lo, mut hi) = (a.abs(), a.abs() + 1.0);
        while self.slack(a, hi) > 0.0 {
            hi = a.abs() + 2.0 * (hi - a.abs());
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.slack(a, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    fn value(&self, a: f64) -> f64 {
        let r = self.n.sqrt();
        let b = self.min_b(a);
        match self.direction {
            Direction::UpperOnCount => self.n / (r - 2.0 * a) * (self.prediction / r + b - a),
            _ => (b + a * (2.0 * self.prediction / self.n - 1.0)) * r,
        }
    }

    fn minimum(&self) -> f64 {
        let r = self.n.sqrt();
        let edge = 0.75 * r;
        let (mut lo, mut hi) = match self.direction {
            Direction::UpperOnSum => (-edge * (1.0 - 1e-9), 40.0 * r),
            Direction::LowerOnSum => (-40.0 * r, edge * (1.0 - 1e-9)),
            Direction::UpperOnCount => (-40.0 * r, 0.5 * r * (1.0 - 1e-9)),
        };
        let steps = 20_000;
        let mut best = lo;
        for i in 0..=steps {
            let a = lo + (hi - lo) * i as f64 / steps as f64;
            if self.value(a) < self.value(best) {
                best = a;
            }
        }
        let w = (hi - lo) / steps as f64;
        lo = (best - w).max(lo);
        hi = (best + w).min(hi);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if self.value(x1) < self.value(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        self.value(0.5 * (lo + hi))
    }
}

fn kato_optimality() -> Outcome {
    let eps = 1e-10;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for direction in [Direction::UpperOnSum, Direction::LowerOnSum, Direction::UpperOnCount] {
        for n in [1e4, 1e6, 1e8] {
            for ratio in [1e-4, 1e-2, 0.5] {
                let prediction = ratio * n;
                let oracle = Minimiser { direction, n, prediction, eps }.minimum();
                let params = kato_params(direction, n, prediction, eps).unwrap();
                let got = params.objective();
                worst = worst.max((got - oracle) / oracle.abs());
                cases += 1;
            }
        }
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("{cases} grid points; worst relative excess over the oracle {worst:.2e} (tol 1e-4)"),
    }
}

fn selection(protocol: Protocol) -> Selection {
    match protocol {
        Protocol::Pm => Selection::Pm(PmSelection::from_basis(0.6, 0.7).unwrap()),
        Protocol::Mdi => Selection::Mdi(MdiSelection::from_basis(0.6, 0.7, 0.3).unwrap()),
    }
}

fn template(protocol: Protocol, n_tot: u64) -> ProtocolConfig {
    let mut cfg = ProtocolConfig::nominal(selection(protocol), n_tot);
    cfg.announced = vec![BellOutcome::PsiMinus];
    cfg
}

fn asymptotic_agreement() -> Outcome {
    let mut worst: f64 = 0.0;
    for protocol in [Protocol::Pm, Protocol::Mdi] {
        for delta in [0.0, 0.126] {
            let d = Decomposed::new(protocol, delta).unwrap();
            for loss in [10.0, 30.0] {
                let mut cfg = template(protocol, 1_000_000_000);
                cfg.delta = delta;
                cfg.asymptotic = true;
                let ch = ChannelParams::new(loss, NOMINAL_DARK_COUNT).unwrap();
                for m in EstimationMethod::ALL {
                    let r = estimate_phase_errors(&cfg, &d, &ch, m).unwrap();
                    worst = worst.max((r.upper_rate() - r.true_rate()).abs() / r.true_rate());
                }
            }
        }
    }
    Outcome {
        pass: worst <= 1e-3,
        detail: format!("24 cases; worst relative deviation from the channel phase-error rate {worst:.2e} (tol 1e-3)"),
    }
}

struct GridPoint {
    protocol: Protocol,
    n_tot: u64,
    loss: f64,
    rs: f64,
    azuma: f64,
    kato: f64,
}

fn rate_grid() -> Vec<GridPoint> {
    let s = SearchSpace::default();
    let mut out = Vec::new();
    for protocol in [Protocol::Pm, Protocol::Mdi] {
        for loss in [10.0, 20.0, 30.0] {
            let ch = ChannelParams::new(loss, NOMINAL_DARK_COUNT).unwrap();
            for n_tot in [100_000_000u64, 1_000_000_000, 10_000_000_000] {
                let cfg = template(protocol, n_tot);
                let rate = |m| optimize_rate(&cfg, &ch, m, &s).unwrap().rate;
                out.push(GridPoint {
                    protocol,
                    n_tot,
                    loss,
                    rs: rate(EstimationMethod::RandomSampling),
                    azuma: rate(EstimationMethod::Azuma),
                    kato: rate(EstimationMethod::Kato),
                });
            }
        }
    }
    out
}

fn azuma_ordering(grid: &[GridPoint]) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for chunk in grid.chunks(3) {
        let mut prev = f64::INFINITY;
        for p in chunk {
            pass &= p.rs >= p.azuma && p.rs > 0.0;
            let gap = 1.0 - p.azuma / p.rs;
            if gap > prev + 1e-12 {
                pass = false;
                notes.push(format!("{:?} {} dB gap grows at {:e}", p.protocol, p.loss, p.n_tot as f64));
            }
            prev = gap;
        }
    }
    let gaps: Vec<String> = grid
        .iter()
        .map(|p| format!("{:.3}", 1.0 - p.azuma / p.rs))
        .collect();
    Outcome {
        pass,
        detail: format!("18 points; relative gaps [{}] {}", gaps.join(" "), notes.join("; ")),
    }
}

fn kato_behaviour(grid: &[GridPoint]) -> Outcome {
    let mut pass = true;
    let mut worst_pm: f64 = 0.0;
    let mut misses = Vec::new();
    for p in grid {
        match p.protocol {
            Protocol::Pm if p.rs > 0.0 && p.kato > 0.0 => {
                let rel = (p.rs - p.kato).abs() / p.rs;
                worst_pm = worst_pm.max(rel);
                if rel > 0.05 {
                    pass = false;
                    misses.push(format!("P&M {:e}/{} dB: {:.3}", p.n_tot as f64, p.loss, rel));
                }
            }
            Protocol::Mdi if p.rs < p.kato => {
                pass = false;
                misses.push(format!("MDI {:e}/{} dB: Kato above", p.n_tot as f64, p.loss));
            }
            _ => {}
        }
    }
    Outcome {
        pass,
        detail: format!("P&M worst |RS - Kato| / RS {worst_pm:.3} (tol 0.05); misses [{}]", misses.join(", ")),
    }
}

fn end_to_end_coverage() -> Outcome {
    let party = PartyDecomposition::new(pm_states(0.126)).unwrap();
    let tagging = pm_tagging(&PmSelection::from_basis(0.5, 0.5).unwrap(), &party).unwrap();
    let ch = ChannelParams::new(3.0, 1e-4).unwrap();
    let (eps, trials, n_tot) = (0.05, 10_000u64, 100_000u64);
    let mut rng = seeded_rng(8);
    let mut violations = 0u64;
    for _ in 0..trials {
        let s = pm_sample(&tagging, &party, &ch, n_tot, &mut rng);
        let bound = pm_phase_error_bound(&s.counts(), &tagging, eps).unwrap();
        violations += u64::from(s.n_phase_errors.unwrap() as f64 > bound);
    }
    let frac = violations as f64 / trials as f64;
    let limit = three_sigma(eps, trials);
    Outcome {
        pass: frac <= limit,
        detail: format!("{trials} trials at N_tot = {n_tot}; violation rate {frac:.4} (limit {limit:.4})"),
    }
}

fn bb84_reduction() -> Outcome {
    let mut ch = ChannelParams::new(10.0, 1e-6).unwrap();
    ch.misalignment = 0.015;
    let mut cfg = template(Protocol::Pm, 1_000_000_000);
    cfg.delta = 0.0;
    cfg.asymptotic = true;
    let d = Decomposed::new(Protocol::Pm, 0.0).unwrap();
    let r = estimate_phase_errors(&cfg, &d, &ch, EstimationMethod::RandomSampling).unwrap();
    let states = pm_states(0.0).map(|s| s.bloch());
    let e_x = pm_outcome_probability(&states, 2, Basis::X, 1, &ch) / pm_detection_probability(&ch);
    let diff = (r.upper_rate() - e_x).abs();
    Outcome {
        pass: diff <= 1e-6,
        detail: format!("phase-error rate {:.9}, X error rate {e_x:.9}, |diff| {diff:.2e} (tol 1e-6)", r.upper_rate()),
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut results = vec![
        check(1, secs(1), closed_forms),
        check(2, secs(10), reconstruction),
        check(3, secs(120), chernoff_coverage),
        check(4, secs(60), kato_optimality),
        check(5, secs(10), asymptotic_agreement),
    ];
    let start = Instant::now();
    let grid = rate_grid();
    let shared = start.elapsed();
    println!("rate grid with optimiser: {shared:.2?}");
    results.push(check_after(6, secs(300), shared, || azuma_ordering(&grid)));
    results.push(check_after(7, secs(300), shared, || kato_behaviour(&grid)));
    results.push(check(8, secs(600), end_to_end_coverage));
    results.push(check(9, secs(1), bb84_reduction));
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
