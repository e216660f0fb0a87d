//! Figure-data runs. Sweep points are evaluated in parallel; rows are
//! always ordered by sweep value.

use precert_core::detection::{
    analytic_rates, direct_heralding, fidelity_from_rates, monte_carlo_counts, threshold_crossing,
    DetectorLabel, HeraldingTerms, Mode, ScenarioConfig,
};
use precert_core::protocol::{effective_channel, HeraldMode};
use precert_core::tomography::{
    bootstrap_uncertainty, mle_process_reconstruct, simulate_tomography, FlagTag, MleOptions,
    Statistic,
};
use precert_core::{apply_channel, process_fidelity, state_fidelity, Basis, QubitState};
use rayon::prelude::*;

use crate::calibrate::{calibrate_noise, Reference};
use crate::error::{HarnessError, Result};
use crate::spec::{ExperimentSpec, Sweep, SweepVariable};
use crate::table::{ResultTable, RunContext};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Engine {
    Analytic,
    /// Simulated counts over `duration` seconds per sweep point.
    MonteCarlo {
        duration: f64,
        seed: u64,
    },
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::MonteCarlo { .. } => "montecarlo",
        }
    }
}

/// Seed for one independent sub-run of a master seed.
pub fn derive_seed(master: u64, index: u64, purpose: u64) -> u64 {
    let mut z = master
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn header(ctx: &RunContext, run: &str, engine: Option<&Engine>, columns: &[&str]) -> ResultTable {
    let mut t = ResultTable::new(ctx, columns);
    t.push_meta("run", run);
    if let Some(e) = engine {
        t.push_meta("engine", e.name());
    }
    if let Some(Engine::MonteCarlo { duration, .. }) = engine {
        t.push_meta("duration_s", duration);
    }
    t
}

fn collect_rows(t: &mut ResultTable, rows: Vec<Result<Vec<f64>>>) -> Result<()> {
    for r in rows {
        t.push_row(r?);
    }
    Ok(())
}

/// Observed fidelity, or NaN when no coincidences were recorded.
fn observed_fidelity(true_part: f64, accidental: f64, fidelity: f64) -> Result<f64> {
    match fidelity_from_rates(true_part, accidental, fidelity) {
        Err(precert_core::Error::UndefinedFidelity) => Ok(f64::NAN),
        other => Ok(other?),
    }
}

/// Direct-transmission counterpart: precertification removed and the flag
/// detectors' dark rates scaled.
pub fn direct_config(scenario: &ScenarioConfig, dark_scale: f64) -> ScenarioConfig {
    let mut c = scenario.clone();
    if c.mode == Mode::Precert {
        for d in c.detectors.iter_mut() {
            if matches!(d.label, DetectorLabel::D1 | DetectorLabel::D2) {
                d.dark_rate *= dark_scale;
            }
        }
    }
    c.mode = Mode::Direct;
    c
}

pub fn precert_config(scenario: &ScenarioConfig) -> ScenarioConfig {
    let mut c = scenario.clone();
    c.mode = Mode::Precert;
    c
}

/// Fidelity of the heralded channel's output to the input, per input.
pub fn channel_state_fidelity(spec: &ExperimentSpec, input: Basis) -> Result<f64> {
    let chi = effective_channel(&spec.scenario.noise, spec.herald_mode)?;
    let rho = QubitState::from_label(input);
    Ok(state_fidelity(&apply_channel(&chi, &rho)?, &rho))
}

/// `(rate, standard error, true part, accidental part)` of the reported
/// coincidence pattern.
fn reported(cfg: &ScenarioConfig, engine: &Engine, index: u64, purpose: u64) -> Result<[f64; 4]> {
    match *engine {
        Engine::Analytic => {
            let c = analytic_rates(cfg)?.reported(cfg.mode);
            Ok([c.total(), 0.0, c.true_rate, c.accidental_rate])
        }
        Engine::MonteCarlo { duration, seed } => {
            let mc = monte_carlo_counts(cfg, duration, derive_seed(seed, index, purpose))?;
            let (t, a) = mc.reported_counts(cfg.mode);
            let n = (t + a) as f64;
            Ok([n / duration, n.sqrt() / duration, t as f64, a as f64])
        }
    }
}

pub const FIG4_COLUMNS: [&str; 8] = [
    "total_loss_db",
    "added_channel_loss_db",
    "direct_rate",
    "precert_rate",
    "direct_fidelity_H",
    "direct_fidelity_D",
    "precert_fidelity_H",
    "precert_fidelity_D",
];

/// Count rate and observed fidelity against total loss for direct
/// transmission and precertification. Precertification columns are NaN
/// below the fixed precertification loss. Direct transmission carries the
/// input state unchanged; precertified states go through the spec's herald
/// mode channel.
pub fn run_fig4(spec: &ExperimentSpec, engine: &Engine, ctx: &RunContext) -> Result<ResultTable> {
    let sweep = spec.sweep_or(Sweep::new(SweepVariable::TotalLoss, 10.0, 100.0, 1.0)?)?;
    let precert = precert_config(&spec.scenario);
    let direct = direct_config(&spec.scenario, spec.direct_dark_scale);
    let offset = precert.total_loss_offset_db()?;
    let f_h = channel_state_fidelity(spec, Basis::H)?;
    let f_d = channel_state_fidelity(spec, Basis::D)?;

    let mut columns = FIG4_COLUMNS.to_vec();
    if matches!(engine, Engine::MonteCarlo { .. }) {
        columns.extend(["direct_rate_se", "precert_rate_se"]);
    }
    let mut t = header(ctx, "fig4", Some(engine), &columns);
    t.push_meta("precert_loss_offset_db", offset);
    t.push_meta("herald_mode", spec.herald_mode);
    let values = sweep.values();
    let rows: Vec<Result<Vec<f64>>> = values
        .par_iter()
        .enumerate()
        .map(|(k, &total)| {
            let added = total - offset;
            let nan4 = [f64::NAN; 4];
            let d = if total >= 0.0 {
                reported(&direct.with_channel_loss(total), engine, k as u64, 0)?
            } else {
                nan4
            };
            let p = if added >= 0.0 {
                reported(&precert.with_channel_loss(added), engine, k as u64, 1)?
            } else {
                nan4
            };
            let fid = |r: &[f64; 4], f: f64| {
                if r[0].is_nan() {
                    Ok(f64::NAN)
                } else {
                    observed_fidelity(r[2], r[3], f)
                }
            };
            let mut row = vec![
                total,
                added,
                d[0],
                p[0],
                fid(&d, 1.0)?,
                fid(&d, 1.0)?,
                fid(&p, f_h)?,
                fid(&p, f_d)?,
            ];
            if matches!(engine, Engine::MonteCarlo { .. }) {
                row.extend([d[1], p[1]]);
            }
            Ok(row)
        })
        .collect();
    collect_rows(&mut t, rows)?;
    Ok(t)
}

/// `(η_h, standard error)`; Monte Carlo estimates the conditional
/// probability of a signal click from true triples over all flag heralds.
fn heralding_point(
    cfg: &ScenarioConfig,
    engine: &Engine,
    index: u64,
    purpose: u64,
) -> Result<[f64; 2]> {
    match *engine {
        Engine::Analytic => Ok([HeraldingTerms::from_config(cfg)?.efficiency()?, 0.0]),
        Engine::MonteCarlo { duration, seed } => {
            let mc = monte_carlo_counts(
                &precert_config(cfg),
                duration,
                derive_seed(seed, index, purpose),
            )?;
            let heralds = (mc.tally.herald_flag_true + mc.tally.herald_flag_accidental) as f64;
            if heralds == 0.0 {
                return Ok([f64::NAN, f64::NAN]);
            }
            let eta = mc.tally.triple_true as f64 / heralds;
            Ok([eta, (eta * (1.0 - eta) / heralds).sqrt()])
        }
    }
}

fn direct_point(
    cfg: &ScenarioConfig,
    engine: &Engine,
    index: u64,
    purpose: u64,
) -> Result<[f64; 2]> {
    match *engine {
        Engine::Analytic => Ok([direct_heralding(cfg)?, 0.0]),
        Engine::MonteCarlo { duration, seed } => {
            let mc = monte_carlo_counts(cfg, duration, derive_seed(seed, index, purpose))?;
            let heralds = mc.tally.singles[DetectorLabel::D5.index()] as f64;
            if heralds == 0.0 {
                return Ok([f64::NAN, f64::NAN]);
            }
            let clicks = (mc.tally.herald_flag_true + mc.tally.herald_flag_accidental) as f64;
            let eta = clicks / heralds;
            Ok([eta, (eta * (1.0 - eta) / heralds).sqrt()])
        }
    }
}

/// Channel loss at which a variant's heralding efficiency falls to the
/// threshold; `None` when it starts at or below it.
fn crossing(cfg: &ScenarioConfig, threshold: f64) -> Result<Option<f64>> {
    match threshold_crossing(cfg, threshold) {
        Ok(x) => Ok(Some(x)),
        Err(precert_core::Error::InvalidParameter {
            name: "threshold", ..
        }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Heralding efficiency against channel loss for each detector variant,
/// plus direct transmission (click probability per herald). Rows at each
/// variant's threshold crossing are added with `marker = 1`.
pub fn run_fig5(spec: &ExperimentSpec, engine: &Engine, ctx: &RunContext) -> Result<ResultTable> {
    let sweep = spec.sweep_or(Sweep::new(SweepVariable::ChannelLoss, 0.0, 60.0, 1.0)?)?;
    let configs: Vec<ScenarioConfig> = spec
        .variants
        .iter()
        .map(|v| precert_config(&v.config(&spec.scenario)))
        .collect();
    let direct = direct_config(&spec.scenario, spec.direct_dark_scale);

    let names: Vec<String> = spec
        .variants
        .iter()
        .map(|v| format!("eta_h_{}", v.as_str().replace('-', "_")))
        .collect();
    let mut columns: Vec<&str> = vec!["channel_loss_db"];
    columns.extend(names.iter().map(String::as_str));
    columns.push("eta_direct");
    let se_names: Vec<String> = names.iter().map(|n| format!("{n}_se")).collect();
    if matches!(engine, Engine::MonteCarlo { .. }) {
        columns.extend(se_names.iter().map(String::as_str));
        columns.push("eta_direct_se");
    }
    columns.extend(["threshold", "marker"]);
    let mut t = header(ctx, "fig5", Some(engine), &columns);
    t.push_meta("threshold", spec.threshold);

    let mut points: Vec<(f64, bool)> = sweep.values().into_iter().map(|x| (x, false)).collect();
    for (v, cfg) in spec.variants.iter().zip(&configs) {
        let key = format!("crossing_{}_db", v.as_str().replace('-', "_"));
        match crossing(cfg, spec.threshold) {
            Ok(Some(x)) => {
                t.push_meta(key, x);
                points.push((x, true));
            }
            Ok(None) => t.push_meta(key, "below threshold at zero loss"),
            Err(HarnessError::Core(precert_core::Error::UnreachableThreshold {
                searched_db,
                ..
            })) => t.push_meta(key, format!("above threshold up to {searched_db} dB")),
            Err(e) => return Err(e),
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mc = matches!(engine, Engine::MonteCarlo { .. });
    let rows: Vec<Result<Vec<f64>>> = points
        .par_iter()
        .enumerate()
        .map(|(k, &(loss, marker))| {
            let mut etas = Vec::new();
            let mut ses = Vec::new();
            for (j, cfg) in configs.iter().enumerate() {
                let [e, s] =
                    heralding_point(&cfg.with_channel_loss(loss), engine, k as u64, j as u64)?;
                etas.push(e);
                ses.push(s);
            }
            let [de, ds] = direct_point(&direct.with_channel_loss(loss), engine, k as u64, 99)?;
            let mut row = vec![loss];
            row.extend(etas);
            row.push(de);
            if mc {
                row.extend(ses);
                row.push(ds);
            }
            row.extend([spec.threshold, if marker { 1.0 } else { 0.0 }]);
            Ok(row)
        })
        .collect();
    collect_rows(&mut t, rows)?;
    Ok(t)
}

pub const HERALDING_COLUMNS: [&str; 6] = [
    "channel_loss_db",
    "eta_signal",
    "p_dark",
    "p_flag",
    "eta_h",
    "eta_direct",
];

/// Heralding-efficiency terms for the spec scenario, at its channel loss or
/// over the spec's channel-loss sweep. The threshold crossing goes into the
/// metadata; a heralding efficiency that never falls to the threshold is an
/// error.
pub fn run_heralding(
    spec: &ExperimentSpec,
    engine: &Engine,
    ctx: &RunContext,
) -> Result<ResultTable> {
    let cfg = precert_config(&spec.scenario);
    let here = cfg.budget.channel_loss_db;
    let sweep = spec.sweep_or(Sweep::new(SweepVariable::ChannelLoss, here, here, 1.0)?)?;
    let direct = direct_config(&spec.scenario, spec.direct_dark_scale);
    let mut t = header(ctx, "heralding", Some(engine), &HERALDING_COLUMNS);
    t.push_meta("threshold", spec.threshold);
    match crossing(&cfg, spec.threshold)? {
        Some(x) => t.push_meta("threshold_crossing_db", x),
        None => t.push_meta("threshold_crossing_db", "below threshold at zero loss"),
    }
    let rows: Vec<Result<Vec<f64>>> = sweep
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, &loss)| {
            let c = cfg.with_channel_loss(loss);
            let terms = HeraldingTerms::from_config(&c)?;
            let [eta, _] = heralding_point(&c, engine, k as u64, 0)?;
            let [de, _] = direct_point(&direct.with_channel_loss(loss), engine, k as u64, 1)?;
            Ok(vec![
                loss,
                terms.eta_signal,
                terms.p_dark,
                terms.p_flag,
                eta,
                de,
            ])
        })
        .collect();
    collect_rows(&mut t, rows)?;
    Ok(t)
}

fn flag_tag(mode: HeraldMode) -> FlagTag {
    match mode {
        HeraldMode::DOnly => FlagTag::D,
        HeraldMode::AOnly => FlagTag::A,
        HeraldMode::Pooled | HeraldMode::PooledFeedforward => FlagTag::Pooled,
    }
}

/// Column names of [`run_proctomo`].
pub fn proctomo_columns() -> Vec<String> {
    let mut c: Vec<String> = [
        "mode_index",
        "fidelity_target",
        "fidelity_target_std",
        "fidelity_identity",
        "model_fidelity_target",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for part in ["re", "im"] {
        for i in 0..4 {
            for j in 0..4 {
                c.push(format!("chi_{part}_{i}{j}"));
            }
        }
    }
    c
}

/// Simulated process tomography of every herald mode: reconstructed χ, its
/// fidelity to the mode's ideal process with a bootstrap standard
/// deviation, and the fidelity to the identity. Only the feedforward mode
/// is reconstructed with the trace-preserving constraint.
pub fn run_proctomo(spec: &ExperimentSpec, ctx: &RunContext) -> Result<ResultTable> {
    let seed = spec.require_seed()?;
    let columns = proctomo_columns();
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = header(ctx, "proctomo", None, &refs);
    let tomo = spec.tomography;
    t.push_meta("counts_per_setting", tomo.counts_per_setting);
    t.push_meta("resamples", tomo.resamples);
    let opts = MleOptions::default();
    for (k, mode) in HeraldMode::ALL.into_iter().enumerate() {
        let reference = Reference::natural(mode);
        t.push_meta(format!("mode_{k}"), format!("{mode} vs {reference}"));
        let truth = effective_channel(&spec.scenario.noise, mode)?;
        let data = simulate_tomography(
            &truth,
            &Basis::ALL,
            &Basis::ALL,
            flag_tag(mode),
            tomo.counts_per_setting,
            derive_seed(seed, k as u64, 0),
            tomo.dark_fraction,
        )?;
        let tp = mode.is_trace_preserving();
        let chi = mle_process_reconstruct(&data, tp, &opts)?;
        let target = reference.process();
        let stat = Statistic::ProcessFidelity {
            target,
            constrain_tp: tp,
        };
        let boot = bootstrap_uncertainty(
            &data,
            tomo.resamples,
            derive_seed(seed, k as u64, 1),
            &stat,
            &opts,
        )?;
        let mut row = vec![
            k as f64,
            process_fidelity(&chi, &target),
            boot.std,
            process_fidelity(&chi, &precert_core::ProcessMatrix::identity()),
            process_fidelity(&truth, &target),
        ];
        let m = chi.matrix();
        row.extend((0..16).map(|n| m.get(n / 4, n % 4).re));
        row.extend((0..16).map(|n| m.get(n / 4, n % 4).im));
        t.push_row(row);
    }
    Ok(t)
}

pub const CALIBRATION_COLUMNS: [&str; 8] = [
    "target_index",
    "target",
    "fitted",
    "interferometer_dephasing",
    "pockels_phase_error",
    "residual_rotation",
    "residual",
    "iterations",
];

/// Noise parameters fitted to the spec's fidelity targets.
pub fn run_calibrate(spec: &ExperimentSpec, ctx: &RunContext) -> Result<ResultTable> {
    let cal = calibrate_noise(&spec.targets)?;
    let mut t = header(ctx, "calibrate", None, &CALIBRATION_COLUMNS);
    for (k, (target, fitted)) in spec.targets.iter().zip(&cal.fitted).enumerate() {
        t.push_meta(
            format!("target_{k}"),
            format!("{} vs {}", target.mode, target.reference),
        );
        t.push_row(vec![
            k as f64,
            target.value,
            *fitted,
            cal.noise.interferometer_dephasing,
            cal.noise.pockels_phase_error,
            cal.noise.residual_rotation,
            cal.residual,
            cal.iterations as f64,
        ]);
    }
    Ok(t)
}
