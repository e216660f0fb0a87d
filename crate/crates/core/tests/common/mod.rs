//! Random scenario generation shared by the property tests.

#![allow(dead_code)]

use precert_core::detection::{baseline, CoincidenceWindow, LossBudget, Mode, ScenarioConfig};
use rand::Rng;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Broad random precert scenario.
pub fn random_scenario<R: Rng>(rng: &mut R) -> ScenarioConfig {
    let mut c = baseline::scenario(Mode::Precert);
    c.alice_detected_singles = log_uniform(rng, 1e4, 1e8);
    let eta5 = rng.random_range(0.05..1.0);
    let coupling = rng.random_range(0.01..1.0);
    c.alice_herald_rate = c.alice_detected_singles * eta5 / coupling;
    c.budget = LossBudget {
        coupling_before_pdc_db: rng.random_range(0.0..10.0),
        pdc_efficiency_db: rng.random_range(0.0..60.0),
        flag_coupling_db: rng.random_range(0.0..10.0),
        signal_coupling_db: rng.random_range(0.0..10.0),
        channel_loss_db: rng.random_range(0.0..60.0),
    };
    for d in c.detectors.iter_mut() {
        d.efficiency = if d.label == precert_core::detection::DetectorLabel::D5 {
            eta5
        } else {
            rng.random_range(0.01..1.0)
        };
        d.dark_rate = log_uniform(rng, 1e-4, 1e4);
        d.jitter = rng.random_range(0.0..500e-12);
    }
    c.window = CoincidenceWindow {
        width: log_uniform(rng, 50e-12, 10e-9),
    };
    c
}

/// Scenario restricted so every reported pattern is measurable in a
/// simulated run of modest length.
pub fn random_countable_scenario<R: Rng>(rng: &mut R) -> ScenarioConfig {
    loop {
        let mut c = random_scenario(rng);
        c.budget.pdc_efficiency_db = rng.random_range(0.0..30.0);
        c.budget.channel_loss_db = rng.random_range(0.0..20.0);
        c.alice_detected_singles = log_uniform(rng, 1e4, 1e6);
        let eta5 = c.detectors[4].efficiency;
        c.alice_herald_rate = c.alice_detected_singles * eta5 / rng.random_range(0.05..1.0);
        let r = precert_core::detection::analytic_rates(&c).unwrap();
        if r.triple.true_rate > 1e-2 {
            return c;
        }
    }
}
