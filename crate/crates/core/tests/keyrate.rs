use ltqkd_core::channel::{ChannelParams, NOMINAL_DARK_COUNT};
use ltqkd_core::config::{MdiSelection, PmSelection, ProtocolConfig, Selection};
use ltqkd_core::keyrate::{
    binary_entropy, compute_rate, epsilon_budget, optimize_rate, secret_key_length,
    EstimationMethod, SearchSpace,
};
use ltqkd_core::qubit::BellOutcome;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pm(p_z_a: f64, p_z_b: f64, n_tot: u64) -> ProtocolConfig {
    ProtocolConfig::nominal(Selection::Pm(PmSelection::from_basis(p_z_a, p_z_b).unwrap()), n_tot)
}

fn mdi(p_z: f64, p_t: f64, n_tot: u64) -> ProtocolConfig {
    let sel = MdiSelection::from_basis(p_z, p_z, p_t).unwrap();
    let mut c = ProtocolConfig::nominal(Selection::Mdi(sel), n_tot);
    c.announced = vec![BellOutcome::PsiMinus];
    c
}

fn channel(loss: f64) -> ChannelParams {
    ChannelParams::new(loss, NOMINAL_DARK_COUNT).unwrap()
}

#[test]
fn entropy_reference() {
    assert!((binary_entropy(0.11).unwrap() - 0.49991596).abs() < 1e-6);
    assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
    assert!(binary_entropy(1.5).is_err());
}

#[test]
fn budget_reference() {
    let b = epsilon_budget(1e-8, 1e-8).unwrap();
    assert!((b.eps - 2.5e-17).abs() < 1e-30);
    assert_eq!(b.eps, b.xi);
    assert!(((2.0 * (b.eps + b.xi)).sqrt() - 1e-8).abs() < 1e-23);
    assert!(epsilon_budget(2.0, 1e-8).is_err());
}

#[test]
fn key_length_spreadsheet_value() {
    let n_s = 1e6;
    let h2 = -0.02 * 0.02f64.log2() - 0.98 * 0.98f64.log2();
    let h5 = -0.05 * 0.05f64.log2() - 0.95 * 0.95f64.log2();
    let lambda = 1.16 * h2 * n_s;
    let want = n_s * (1.0 - h5) - lambda - 1e8f64.log2() - (1.0 / 2.5e-17f64).log2();
    let got = secret_key_length(n_s, 0.05 * n_s, lambda, 1e-8, 2.5e-17);
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    // 1e6 (1 - 0.286397) - 164071.03 - 26.575 - 55.151
    assert!((got - 549_450.287).abs() < 1e-3);
}

#[test]
fn key_length_edges() {
    let free = secret_key_length(1e6, 0.0, 0.0, 1e-8, 2.5e-17);
    assert!((free - (1e6 - 1e8f64.log2() - (4e16f64).log2())).abs() < 1e-6);
    assert_eq!(secret_key_length(0.0, 0.0, 0.0, 1e-8, 2.5e-17), 0.0);
    assert_eq!(secret_key_length(1e6, 8e5, 0.0, 1e-8, 2.5e-17), 0.0);
}

#[test]
fn sampling_beats_azuma_at_nominal_point() {
    let cfg = pm(0.8, 0.8, 1_000_000_000);
    let rs = compute_rate(&cfg, &channel(20.0), EstimationMethod::RandomSampling).unwrap();
    let az = compute_rate(&cfg, &channel(20.0), EstimationMethod::Azuma).unwrap();
    assert!(rs.rate > 0.0);
    assert!(rs.rate >= az.rate);
    assert!(rs.n_ph_upper <= az.n_ph_upper);
}

#[test]
fn result_invariants_hold() {
    for cfg in [pm(0.7, 0.6, 100_000_000), mdi(0.7, 0.05, 1_000_000_000)] {
        for loss in [0.0, 10.0, 25.0] {
            for m in EstimationMethod::ALL {
                let r = compute_rate(&cfg, &channel(loss), m).unwrap();
                assert!((0.0..=1.0).contains(&r.rate));
                assert!(r.key_length <= r.n_sifted);
                assert!(r.n_ph_upper >= r.n_ph_true * (1.0 - 1e-12));
                assert_eq!(r.method, m);
            }
        }
    }
}

#[test]
fn asymptotic_methods_agree() {
    for mut cfg in [pm(0.7, 0.6, 1_000_000_000), mdi(0.7, 0.05, 1_000_000_000)] {
        cfg.asymptotic = true;
        let rates: Vec<f64> = EstimationMethod::ALL
            .iter()
            .map(|&m| compute_rate(&cfg, &channel(15.0), m).unwrap().rate)
            .collect();
        for r in &rates[1..] {
            assert!((r - rates[0]).abs() <= 1e-3 * rates[0]);
        }
    }
}

#[test]
fn high_loss_gives_exact_zero() {
    for cfg in [pm(0.7, 0.6, 100_000_000), mdi(0.7, 0.05, 100_000_000)] {
        for m in EstimationMethod::ALL {
            let r = compute_rate(&cfg, &channel(80.0), m).unwrap();
            assert_eq!(r.rate, 0.0);
            assert_eq!(r.key_length, 0.0);
        }
    }
}

#[test]
fn rate_is_non_increasing_in_loss() {
    let s = SearchSpace::default();
    for cfg in [pm(0.5, 0.5, 1_000_000_000), mdi(0.5, 0.1, 1_000_000_000)] {
        for m in EstimationMethod::ALL {
            let mut prev = f64::INFINITY;
            for loss in (0..=50).step_by(5) {
                let fixed = compute_rate(&cfg, &channel(loss as f64), m).unwrap().rate;
                assert!(fixed <= prev, "{m:?} at {loss} dB");
                prev = fixed;
            }
        }
        let mut prev = f64::INFINITY;
        for loss in [0.0, 10.0, 20.0, 30.0] {
            let best = optimize_rate(&cfg, &channel(loss), EstimationMethod::RandomSampling, &s)
                .unwrap()
                .rate;
            assert!(best <= prev * (1.0 + 1e-12));
            prev = best;
        }
    }
}

#[test]
fn optimum_beats_random_settings() {
    let s = SearchSpace::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ch = channel(20.0);
    let best = optimize_rate(&pm(0.5, 0.5, 1_000_000_000), &ch, EstimationMethod::RandomSampling, &s).unwrap();
    for _ in 0..10 {
        let cfg = pm(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), 1_000_000_000);
        let r = compute_rate(&cfg, &ch, EstimationMethod::RandomSampling).unwrap();
        assert!(best.key_length >= r.key_length);
    }
    let best = optimize_rate(&mdi(0.5, 0.1, 1_000_000_000), &ch, EstimationMethod::Kato, &s).unwrap();
    for _ in 0..10 {
        let cfg = mdi(rng.random_range(0.05..0.95), rng.random_range(0.001..0.5), 1_000_000_000);
        let r = compute_rate(&cfg, &ch, EstimationMethod::Kato).unwrap();
        assert!(best.key_length >= r.key_length);
    }
}

#[test]
fn optimiser_is_deterministic() {
    let s = SearchSpace::default();
    let cfg = mdi(0.5, 0.1, 100_000_000);
    let a = optimize_rate(&cfg, &channel(15.0), EstimationMethod::Azuma, &s).unwrap();
    let b = optimize_rate(&cfg, &channel(15.0), EstimationMethod::Azuma, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rate.to_bits(), b.rate.to_bits());
}

#[test]
fn key_basis_dominates_as_blocks_grow() {
    let s = SearchSpace::default();
    let mut cfg = pm(0.5, 0.5, 1);
    cfg.delta = 0.0;
    let mut prev = 0.0;
    for n in [100_000_000u64, 10_000_000_000, 1_000_000_000_000] {
        cfg.n_tot = n;
        let r = optimize_rate(&cfg, &channel(10.0), EstimationMethod::RandomSampling, &s).unwrap();
        let Selection::Pm(sel) = r.selection else { unreachable!() };
        assert!(sel.p_z_a() > prev, "{n}: {}", sel.p_z_a());
        prev = sel.p_z_a();
    }
    assert!(prev > 0.95);
}

#[test]
fn bad_search_space_rejected() {
    let s = SearchSpace {
        lower: 0.5,
        upper: 0.4,
        ..SearchSpace::default()
    };
    assert!(optimize_rate(&pm(0.5, 0.5, 1000), &channel(1.0), EstimationMethod::Azuma, &s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn larger_blocks_never_hurt_the_rate(p_z in 0.2f64..0.9, loss in 0.0f64..25.0) {
        let small = compute_rate(&pm(p_z, p_z, 100_000_000), &channel(loss), EstimationMethod::RandomSampling).unwrap();
        let large = compute_rate(&pm(p_z, p_z, 10_000_000_000), &channel(loss), EstimationMethod::RandomSampling).unwrap();
        prop_assert!(large.rate >= small.rate);
    }
}
