use mdiqkd::bsm::{BasisSetting, DetectorSpec, ObservedStats};
use mdiqkd::channel::{Channel, StableChannel};
use mdiqkd::keyrate::{
    binary_entropy, e11ph_upper_bound, h_term, key_rate_asymptotic, key_rate_at_h, key_rate_finite,
    s11_lower_bound, EntropyBase, FluctuationConfig,
};
use mdiqkd::model::{KeyRateModel, ProtocolConfig};
use mdiqkd::sources::{build_wcs_source, ParamVector, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table_one() -> DetectorSpec<f64> {
    DetectorSpec::new(8e-7, 0.005, 0.005).unwrap()
}

fn stable_model(l_a: f64, l_b: f64, protocol: ProtocolConfig<f64>) -> KeyRateModel<f64> {
    let ch = Channel::Stable(StableChannel::from_distances(l_a, l_b, 0.2, 0.65).unwrap());
    KeyRateModel::with_channel(&ch, None, table_one(), protocol)
}

/// Near-optimal parameters for the (10, 60) km link.
fn params_10_60() -> ParamVector<f64> {
    ParamVector::new(
        [0.0109, 0.0567, 0.7848, 0.1785, 0.026, 0.7725],
        [0.0883, 0.4603, 0.6398, 0.165, 0.026, 0.7792],
    )
}

/// Near-optimal parameters for the (50, 100) km link.
#[allow(clippy::approx_constant)]
fn params_50_100() -> ParamVector<f64> {
    ParamVector::new(
        [0.0165, 0.0768, 0.4757, 0.4343, 0.0791, 0.4486],
        [0.1178, 0.5464, 0.489, 0.4323, 0.0848, 0.4472],
    )
}

#[test]
fn decoy_bounds_are_sound_on_random_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 150 {
        attempts += 1;
        assert!(attempts < 2000, "too few usable configurations");
        let party = |rng: &mut ChaCha8Rng| {
            let mu_x: f64 = rng.gen_range(0.005..0.4);
            let mu_y = (mu_x * rng.gen_range(1.3..6.0)).min(0.95);
            [mu_x, mu_y, rng.gen_range(0.05..0.95), 0.2, 0.2, 0.5]
        };
        let x = ParamVector::new(party(&mut rng), party(&mut rng));
        if x[0] >= x[1] || x[6] >= x[7] {
            continue;
        }
        let eta_a = 10f64.powf(rng.gen_range(-3.0..0.0));
        let eta_b = 10f64.powf(rng.gen_range(-3.0..0.0));
        let det = DetectorSpec::new(
            10f64.powf(rng.gen_range(-8.0..-3.0)),
            rng.gen_range(0.0..0.05),
            rng.gen_range(0.0..0.05),
        )
        .unwrap();
        let ch = Channel::Stable(StableChannel::new(eta_a, eta_b).unwrap());
        let model = KeyRateModel::with_channel(&ch, None, det, ProtocolConfig::default());
        let (alice, bob) = model.sources(&x).unwrap();
        let stats = model.stats(&x).unwrap();
        let (s11_true, e11_true) = model.true_single_photon();
        let (s11, _) = s11_lower_bound(&stats, &alice, &bob).unwrap();
        assert!(
            s11 <= s11_true * (1.0 + 1e-9),
            "s11 bound {s11} above truth {s11_true} at {x:?}, eta=({eta_a},{eta_b})"
        );
        if s11 <= 0.0 {
            continue;
        }
        let h = h_term(&stats, &alice, &bob);
        let e11 = e11ph_upper_bound(stats.error_yield_of(Source::X, Source::X), h, s11, &alice, &bob).unwrap();
        assert!(
            e11 >= e11_true.min(0.5) * (1.0 - 1e-9),
            "e11 bound {e11} below truth {e11_true} at {x:?}, eta=({eta_a},{eta_b})"
        );
        checked += 1;
    }
}

#[test]
fn model_truth_is_read_from_the_x_table() {
    let model = stable_model(10.0, 60.0, ProtocolConfig::default());
    let table = model.response().table(BasisSetting::X);
    let (s, e) = model.true_single_photon();
    assert_eq!(s, table.s(1, 1));
    assert!((e - table.t(1, 1) / table.s(1, 1)).abs() < 1e-15);
}

#[test]
fn stable_configuration_bound_below_truth() {
    let model = stable_model(10.0, 60.0, ProtocolConfig::default());
    let x = params_10_60();
    let (alice, bob) = model.sources(&x).unwrap();
    let (s11, _) = s11_lower_bound(&model.stats(&x).unwrap(), &alice, &bob).unwrap();
    assert!(s11 <= model.true_single_photon().0);
    assert!(s11 > 0.0);
}

#[test]
fn swapping_parties_and_channels_keeps_the_rate() {
    let det = table_one();
    let x = params_10_60();
    for (l_a, l_b) in [(10.0, 60.0), (50.0, 100.0), (30.0, 30.0)] {
        let ch = Channel::Stable(StableChannel::from_distances(l_a, l_b, 0.2, 0.65).unwrap());
        let forward = KeyRateModel::with_channel(&ch, None, det, ProtocolConfig::default());
        let backward = KeyRateModel::with_channel(&ch.swapped(), None, det, ProtocolConfig::default());
        for p in [x, params_50_100(), params_10_60().swapped()] {
            let r1 = forward.evaluate(&p).unwrap().r_per_pair;
            let r2 = backward.evaluate(&p.swapped()).unwrap().r_per_pair;
            assert!((r1 - r2).abs() <= 1e-10 * r1.abs().max(1e-300), "({l_a},{l_b}): {r1} vs {r2}");
        }
    }
}

#[test]
fn rate_decreases_as_both_arms_lose_light() {
    let x = params_10_60();
    let mut last = f64::INFINITY;
    for step in 0..30 {
        let scale = 10f64.powf(-0.1 * step as f64);
        let ch = Channel::Stable(StableChannel::new(0.41 * scale, 0.041 * scale).unwrap());
        let model = KeyRateModel::with_channel(&ch, None, table_one(), ProtocolConfig::default());
        let r = model.key_rate(&x);
        assert!(r <= last * (1.0 + 1e-12), "step {step}: {r} > {last}");
        last = r;
    }
    assert_eq!(last, 0.0);
}

#[test]
fn finite_size_rate_grows_toward_asymptotic() {
    let x = params_10_60();
    let base = stable_model(10.0, 60.0, ProtocolConfig::default());
    let asymptotic = base.evaluate_asymptotic(&x).unwrap().r_per_pair;
    let mut last = 0.0;
    for n in [1e9, 1e10, 1e11, 1e12, 1e13] {
        let model = base.with_protocol(ProtocolConfig {
            n_total: n,
            ..ProtocolConfig::default()
        });
        let r = model.evaluate(&x).unwrap().r_per_pair;
        assert!(r >= last, "N_t={n}: {r} < {last}");
        assert!(r <= asymptotic, "N_t={n}: {r} > {asymptotic}");
        last = r;
    }
}

#[test]
fn huge_sample_limit_is_asymptotic() {
    let x = params_10_60();
    let base = stable_model(10.0, 60.0, ProtocolConfig::default());
    let asymptotic = base.evaluate_asymptotic(&x).unwrap();
    let model = base.with_protocol(ProtocolConfig {
        n_total: 1e30,
        ..ProtocolConfig::default()
    });
    let finite = model.evaluate(&x).unwrap();
    let rel = (finite.r_per_pair - asymptotic.r_per_pair).abs() / asymptotic.r_per_pair;
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn joint_constraints_beat_independent_ones() {
    for (l_a, l_b, x) in [(50.0, 100.0, params_50_100()), (10.0, 60.0, params_10_60())] {
        let joint = stable_model(l_a, l_b, ProtocolConfig::default());
        let independent = joint.with_protocol(ProtocolConfig {
            fluctuation: FluctuationConfig::new(5.3, 1e-7, false).unwrap(),
            ..ProtocolConfig::default()
        });
        let rj = joint.evaluate(&x).unwrap().r_per_pair;
        let ri = independent.evaluate(&x).unwrap().r_per_pair;
        assert!(rj > ri, "({l_a},{l_b}): joint {rj} vs independent {ri}");
    }
}

#[test]
fn h_scan_minimum_is_below_endpoints_and_midpoint() {
    let model = stable_model(50.0, 100.0, ProtocolConfig::default());
    let x = params_50_100();
    let (alice, bob) = model.sources(&x).unwrap();
    let stats = model.stats(&x).unwrap();
    let cfg = FluctuationConfig::default();
    let report = key_rate_finite(&stats, &alice, &bob, &cfg, 1.16, EntropyBase::Two).unwrap();
    let at = |h: f64| key_rate_at_h(&stats, &alice, &bob, &cfg, 1.16, EntropyBase::Two, h).unwrap();
    let mid = 0.5 * (report.h_lower + report.h_upper);
    assert!(report.h_lower < report.h_upper);
    assert!(report.r_per_pair <= at(report.h_lower).max(0.0));
    assert!(report.r_per_pair <= at(report.h_upper).max(0.0));
    // scanning matters: the worst H is strictly worse than the centre value
    assert!(at(report.h_argmin) < at(mid), "{} vs {}", at(report.h_argmin), at(mid));
}

#[test]
fn zero_misalignment_toy_keeps_bound_above_truth() {
    let ch = Channel::Stable(StableChannel::new(0.3, 0.1).unwrap());
    let det = DetectorSpec::new(0.0, 0.0, 0.0).unwrap();
    let model = KeyRateModel::with_channel(&ch, None, det, ProtocolConfig::default());
    let x = ParamVector::new([0.05, 0.2, 0.5, 0.2, 0.2, 0.5], [0.1, 0.4, 0.5, 0.2, 0.2, 0.5]);
    let (alice, bob) = model.sources(&x).unwrap();
    let stats = model.stats(&x).unwrap();
    let (s11, _) = s11_lower_bound(&stats, &alice, &bob).unwrap();
    let h = h_term(&stats, &alice, &bob);
    let e11 = e11ph_upper_bound(stats.error_yield_of(Source::X, Source::X), h, s11, &alice, &bob).unwrap();
    let (_, e_true) = model.true_single_photon();
    assert_eq!(e_true, 0.0);
    assert!(e11 >= 0.0);
}

fn hand_built_stats(e_zz: f64, zero_phase_error: bool) -> (ObservedStats<f64>, f64) {
    let alice = build_wcs_source(0.1, 0.3, 0.5, 0.2, 0.2, 0.5, 30).unwrap();
    let bob = build_wcs_source(0.1, 0.3, 0.5, 0.2, 0.2, 0.5, 30).unwrap();
    let model = stable_model(20.0, 20.0, ProtocolConfig::default());
    let stats = model.response().observe(&alice, &bob, 1e11);
    let mut yields = [[(0.0, 0.0); 4]; 4];
    for l in Source::ALL {
        for r in Source::ALL {
            yields[l.index()][r.index()] = (stats.yield_of(l, r), stats.error_yield_of(l, r));
        }
    }
    let h = h_term(&stats, &alice, &bob);
    if zero_phase_error {
        yields[Source::X.index()][Source::X.index()].1 = h / 2.0;
    }
    let s_zz = yields[Source::Z.index()][Source::Z.index()].0;
    yields[Source::Z.index()][Source::Z.index()].1 = e_zz * s_zz;
    (ObservedStats::from_yields(1e11, &alice, &bob, yields), s_zz)
}

#[test]
fn noiseless_entropy_terms_leave_the_signal_part() {
    let alice = build_wcs_source(0.1, 0.3, 0.5, 0.2, 0.2, 0.5, 30).unwrap();
    let (stats, _) = hand_built_stats(0.0, true);
    let report = key_rate_asymptotic(&stats, &alice, &alice, 1.16, EntropyBase::Two).unwrap();
    assert_eq!(report.e11ph_upper, 0.0);
    let expected = 0.5 * 0.5 * alice.a(Source::Z, 1) * alice.a(Source::Z, 1) * report.s11_lower;
    assert!((report.r_per_pair - expected).abs() <= 1e-14 * expected);
}

#[test]
fn maximal_signal_error_costs_full_yield() {
    let alice = build_wcs_source(0.1, 0.3, 0.5, 0.2, 0.2, 0.5, 30).unwrap();
    let (stats, s_zz) = hand_built_stats(0.5, true);
    let report = key_rate_asymptotic(&stats, &alice, &alice, 1.16, EntropyBase::Two).unwrap();
    assert_eq!(binary_entropy(report.e_zz, EntropyBase::Two).unwrap(), 1.0);
    let privacy = alice.a(Source::Z, 1).powi(2) * report.s11_lower;
    assert!(privacy < 1.16 * s_zz);
    assert_eq!(report.r_per_pair, 0.0);
}
