mod common;

use precert_core::detection::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn heralding_matches_conditional_probability_from_rates() {
    let mut r = rng(1);
    for _ in 0..500 {
        let c = common::random_scenario(&mut r);
        let rates = analytic_rates(&c).unwrap();
        // P(signal click | flag ∧ D5) among all flag∧D5 coincidences.
        let conditional = rates.triple.true_rate / rates.herald_flag.total();
        let eta = scenario_heralding(&c).unwrap();
        assert!(
            (eta - conditional).abs() <= 1e-9 * eta.max(1e-300).max(conditional),
            "{eta} vs {conditional}"
        );
        let terms = HeraldingTerms::from_config(&c).unwrap();
        assert!(eta <= terms.eta_signal);
    }
}

#[test]
fn heralding_is_monotone() {
    let mut r = rng(2);
    for _ in 0..200 {
        let c = common::random_scenario(&mut r);
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let e = scenario_heralding(&c.with_channel_loss(2.0 * k as f64)).unwrap();
            assert!(e <= prev);
            prev = e;
        }
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let mut d = c.clone();
            for det in d.detectors.iter_mut() {
                det.dark_rate *= 3f64.powi(k);
            }
            let e = scenario_heralding(&d).unwrap();
            assert!(e <= prev);
            prev = e;
        }
        // Without jitter the window only admits accidentals.
        let mut d = c.clone();
        for det in d.detectors.iter_mut() {
            det.jitter = 0.0;
        }
        let mut prev = 0.0;
        for k in 0..10 {
            d.window.width = 10e-9 / 2f64.powi(k);
            let e = scenario_heralding(&d).unwrap();
            assert!(e >= prev);
            prev = e;
        }
    }
}

#[test]
fn fidelity_falls_with_loss_and_stays_bounded() {
    let mut r = rng(3);
    let mut checked = 0;
    for _ in 0..3000 {
        let mut c = common::random_scenario(&mut r);
        c.budget.pdc_efficiency_db = 55.0;
        c.budget.channel_loss_db = 0.0;
        // Dark-count dominated regime: once photon singles exceed the dark
        // rate, photon-photon accidentals grow faster than the true rate.
        let singles = analytic_rates(&c).unwrap().singles;
        if (0..4).any(|k| singles[k] > 1.01 * c.detectors[k].dark_rate) {
            continue;
        }
        for mode in [Mode::Precert, Mode::Direct] {
            c.mode = mode;
            let mut prev = 1.0;
            for k in 0..40 {
                let f = fidelity_vs_loss(&c.with_channel_loss(2.0 * k as f64), 0.93).unwrap();
                assert!((0.5..=0.93).contains(&f));
                assert!(f <= prev, "{mode}: {f} > {prev}");
                prev = f;
            }
        }
        checked += 1;
    }
    assert!(checked >= 100, "{checked}");
}

#[test]
fn losses_on_the_common_path_commute() {
    let mut r = rng(4);
    for _ in 0..200 {
        let c = common::random_scenario(&mut r);
        let b = c.budget;
        let total = b.coupling_before_pdc_db + b.pdc_efficiency_db + b.channel_loss_db;
        let mut d = c.clone();
        d.budget.coupling_before_pdc_db = 0.25 * total;
        d.budget.pdc_efficiency_db = 0.5 * total;
        d.budget.channel_loss_db = 0.25 * total;
        let (x, y) = (analytic_rates(&c).unwrap(), analytic_rates(&d).unwrap());
        for (p, q) in [
            (x.herald_flag, y.herald_flag),
            (x.flag_signal, y.flag_signal),
            (x.triple, y.triple),
        ] {
            assert!((p.true_rate - q.true_rate).abs() <= 1e-12 * p.true_rate.max(1e-300));
        }
    }
}

fn assert_close(label: &str, expected_rate: f64, observed_count: u64, duration: f64) {
    let expected = expected_rate * duration;
    if expected < 1000.0 {
        return;
    }
    let z = (observed_count as f64 - expected) / expected.sqrt();
    assert!(
        z.abs() < 4.0,
        "{label}: expected {expected}, observed {observed_count} (z = {z:.2})"
    );
}

#[test]
fn monte_carlo_agrees_with_analytic_rates() {
    let mut r = rng(5);
    for i in 0..20 {
        let c = common::random_countable_scenario(&mut r);
        let a = analytic_rates(&c).unwrap();
        let duration = 2000.0 / a.triple.true_rate;
        let mc = monte_carlo_counts(&c, duration, 1000 + i).unwrap();
        let t = &mc.tally;
        for (k, (&rate, &n)) in a.singles.iter().zip(&t.singles).enumerate() {
            assert_close(&format!("singles D{}", k + 1), rate, n, duration);
        }
        assert_close(
            "herald_flag true",
            a.herald_flag.true_rate,
            t.herald_flag_true,
            duration,
        );
        assert_close(
            "herald_flag acc",
            a.herald_flag.accidental_rate,
            t.herald_flag_accidental,
            duration,
        );
        assert_close(
            "flag_signal true",
            a.flag_signal.true_rate,
            t.flag_signal_true,
            duration,
        );
        assert_close(
            "flag_signal acc",
            a.flag_signal.accidental_rate,
            t.flag_signal_accidental,
            duration,
        );
        assert_close("triple true", a.triple.true_rate, t.triple_true, duration);
        assert_close(
            "triple acc",
            a.triple.accidental_rate,
            t.triple_accidental,
            duration,
        );
    }
}

#[test]
fn monte_carlo_is_independent_of_thread_count() {
    let c = baseline::scenario(Mode::Precert);
    let runs: Vec<_> = [1, 2, 7]
        .into_iter()
        .map(|n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| monte_carlo_counts(&c, 5000.0, 42).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn reference_rates() {
    let c = baseline::scenario(Mode::Precert);
    let r = analytic_rates(&c).unwrap();
    let triple = r.triple.total();
    assert!((0.15..=0.6).contains(&triple), "triple rate {triple}");
    let pairs_per_hour = r.flag_signal.total() * 3600.0;
    assert!(
        (550.0..=2200.0).contains(&pairs_per_hour),
        "{pairs_per_hour}"
    );
}

#[test]
fn direct_rate_saturates() {
    let d = baseline::direct_scenario();
    let rate = |db: f64| {
        analytic_rates(&d.with_channel_loss(db))
            .unwrap()
            .herald_flag
            .total()
    };
    for k in 0..20 {
        let db = 55.0 + k as f64;
        let slope = (rate(db).log10() - rate(db + 1.0).log10()) / 0.1;
        assert!(slope.abs() < 0.1, "slope {slope} at {db} dB");
    }
    assert!((rate(10.0).log10() - rate(20.0).log10() - 1.0).abs() < 0.01);
}

#[test]
fn heralding_plateau_and_crossing() {
    let eta = scenario_heralding(&baseline::scenario(Mode::Precert)).unwrap();
    assert!((5e-4..=5e-3).contains(&eta), "{eta}");

    let improved = baseline::improved_scenario();
    let eta0 = HeraldingTerms::from_config(&improved).unwrap().eta_signal;
    assert!((eta0 - 0.72).abs() < 1e-12);
    let x = threshold_crossing(&improved, 0.66).unwrap();
    assert!((x - 35.0).abs() <= 3.0, "{x}");
    let at = scenario_heralding(&improved.with_channel_loss(x)).unwrap();
    assert!((at - 0.66).abs() < 1e-4);

    // p_dark/p_flag is linear in the dark rate and in 1/transmission.
    let mut doubled = improved.clone();
    for d in doubled.detectors.iter_mut() {
        d.dark_rate *= 2.0;
    }
    let shift = threshold_crossing(&doubled, 0.66).unwrap() - x;
    assert!((shift + 10.0 * 2f64.log10()).abs() < 0.05, "{shift}");
}

#[test]
fn threshold_errors() {
    let improved = baseline::improved_scenario();
    assert!(matches!(
        threshold_crossing(&improved, 0.9),
        Err(precert_core::Error::InvalidParameter { .. })
    ));
}

#[test]
fn snr_matches_time_tag_simulation() {
    let c = baseline::scenario(Mode::Precert);
    let analytic = snr_estimate(&c, FlagSelection::D2).unwrap();
    let mc = monte_carlo_histogram(&c, FlagSelection::D2, 20_000.0, 7).unwrap();
    assert!(
        (229.0 / 3.0..=229.0 * 3.0).contains(&analytic.snr),
        "{}",
        analytic.snr
    );
    assert!(
        (mc.snr / analytic.snr - 1.0).abs() < 0.15,
        "mc {} analytic {}",
        mc.snr,
        analytic.snr
    );
    assert_eq!(mc.histogram.centers, analytic.histogram.centers);
}

#[test]
fn snr_scales_inversely_with_window() {
    let c = baseline::scenario(Mode::Precert);
    let mut wide = c.clone();
    wide.window.width *= 2.0;
    let a = snr_estimate(&c, FlagSelection::Either).unwrap().snr;
    let b = snr_estimate(&wide, FlagSelection::Either).unwrap().snr;
    assert!((b / a - 0.5).abs() < 1e-3, "{}", b / a);
}
