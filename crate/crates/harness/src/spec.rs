//! Experiment specification files (TOML).
//!
//! Every key is optional; absent keys take the defaults below. Unknown keys
//! are rejected.
//!
//! | key | default |
//! |-----|---------|
//! | `mode` | `"precert"` |
//! | `seed` | none (required by stochastic runs) |
//! | `output` | none |
//! | `duration` | 3600 s (Monte Carlo integration time per sweep point) |
//! | `herald_mode` | `"herald-D-only"` (qubit channel for fig4 fidelities) |
//! | `input_state` | `"H"` |
//! | `alice_detected_singles` | 1.2e7 /s |
//! | `alice_herald_rate` | 4.8e7 /s |
//! | `window` | 2.3e-9 s |
//! | `[budget]` | 6 / 55 / 5 / 5 dB, channel 0 dB |
//! | `[detectors.D1]` … `[detectors.D5]` | reference detector list |
//! | `[noise]` | [`CALIBRATED_NOISE`] |
//! | `[sweep]` | per run: fig4 total loss 10–100 dB, fig5 channel loss 0–60 dB, step 1 |
//! | `[tomography]` | 1e4 counts per setting, 200 resamples, no background |
//! | `[fig4]` | direct-transmission dark scale 0.5 |
//! | `[fig5]` | variants `scenario`, `near-term`, `improved`; threshold 0.66 (also used by `heralding`) |
//! | `[calibration]` | the four reference fidelities |
//!
//! In direct mode the detector defaults have halved D1/D2 dark rates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use precert_core::detection::{baseline, DetectorLabel, Mode, ScenarioConfig};
use precert_core::protocol::{HeraldMode, NoiseParams};
use precert_core::{Basis, QubitState};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::calibrate::{FidelityTarget, Reference, CALIBRATED_NOISE, MEASURED_TARGETS};
use crate::error::{HarnessError, Result};

pub const DEFAULT_DURATION: f64 = 3600.0;
pub const DEFAULT_COUNTS_PER_SETTING: f64 = 1e4;
pub const DEFAULT_RESAMPLES: usize = 200;
pub const DEFAULT_THRESHOLD: f64 = 0.66;
pub const DEFAULT_DIRECT_DARK_SCALE: f64 = 0.5;

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    mode: Option<String>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    duration: Option<f64>,
    herald_mode: Option<String>,
    input_state: Option<String>,
    alice_detected_singles: Option<f64>,
    alice_herald_rate: Option<f64>,
    window: Option<f64>,
    budget: Option<RawBudget>,
    detectors: Option<BTreeMap<String, RawDetector>>,
    noise: Option<RawNoise>,
    sweep: Option<RawSweep>,
    tomography: Option<RawTomography>,
    fig4: Option<RawFig4>,
    fig5: Option<RawFig5>,
    calibration: Option<RawCalibration>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    coupling_before_pdc_db: Option<f64>,
    pdc_efficiency_db: Option<f64>,
    flag_coupling_db: Option<f64>,
    signal_coupling_db: Option<f64>,
    channel_loss_db: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    efficiency: Option<f64>,
    dark_rate: Option<f64>,
    jitter: Option<f64>,
    stray_rate: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    interferometer_dephasing: Option<f64>,
    pockels_phase_error: Option<f64>,
    residual_rotation: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    variable: String,
    start: f64,
    stop: f64,
    step: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTomography {
    counts_per_setting: Option<f64>,
    resamples: Option<usize>,
    dark_fraction: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFig4 {
    direct_dark_scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFig5 {
    variants: Option<Vec<String>>,
    threshold: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    targets: Vec<RawTarget>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    mode: String,
    reference: Option<String>,
    value: f64,
}

/// Swept loss variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    ChannelLoss,
    TotalLoss,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::ChannelLoss => "channel_loss_db",
            SweepVariable::TotalLoss => "total_loss_db",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn new(variable: SweepVariable, start: f64, stop: f64, step: f64) -> Result<Self> {
        let field = |s: &str| format!("sweep.{s}");
        if !(start.is_finite() && stop.is_finite()) {
            return Err(HarnessError::validation(
                field("start"),
                "bounds must be finite",
            ));
        }
        if stop < start {
            return Err(HarnessError::validation(
                field("stop"),
                "must not be below start",
            ));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(HarnessError::validation(field("step"), "must be > 0"));
        }
        if (stop - start) / step > 1e6 {
            return Err(HarnessError::validation(
                field("step"),
                "more than 1e6 sweep points",
            ));
        }
        Ok(Self {
            variable,
            start,
            stop,
            step,
        })
    }

    /// `start, start + step, …` up to `stop` (inclusive within 1e-9 step).
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomographySpec {
    pub counts_per_setting: f64,
    pub resamples: usize,
    pub dark_fraction: f64,
}

impl Default for TomographySpec {
    fn default() -> Self {
        Self {
            counts_per_setting: DEFAULT_COUNTS_PER_SETTING,
            resamples: DEFAULT_RESAMPLES,
            dark_fraction: 0.0,
        }
    }
}

/// Detector variants compared in the heralding-efficiency sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// The loaded scenario itself.
    Scenario,
    /// 1 dark count/s flag arm, 10% efficiency, 100 ps.
    NearTerm,
    /// 1e-3 dark counts/s flag arm, η_signal = 0.72, 100 ps.
    Improved,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Scenario => "scenario",
            Variant::NearTerm => "near-term",
            Variant::Improved => "improved",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [Variant::Scenario, Variant::NearTerm, Variant::Improved]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                HarnessError::validation("fig5.variants", format!("unknown variant `{s}`"))
            })
    }

    pub fn config(self, scenario: &ScenarioConfig) -> ScenarioConfig {
        match self {
            Variant::Scenario => scenario.clone(),
            Variant::NearTerm => baseline::near_term_scenario(),
            Variant::Improved => baseline::improved_scenario(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub herald_mode: HeraldMode,
    pub sweep: Option<Sweep>,
    pub tomography: TomographySpec,
    pub duration: f64,
    pub direct_dark_scale: f64,
    pub variants: Vec<Variant>,
    pub threshold: f64,
    pub targets: Vec<FidelityTarget>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    /// SHA-256 of the spec text (of the empty string for built-in defaults).
    pub hash: String,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        parse_spec("", Path::new("<defaults>")).expect("defaults are valid")
    }
}

impl ExperimentSpec {
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            HarnessError::validation(
                "seed",
                "required for stochastic runs (spec `seed` or --seed)",
            )
        })
    }

    /// The spec's sweep, or `default` when absent; the variable must match.
    pub fn sweep_or(&self, default: Sweep) -> Result<Sweep> {
        match self.sweep {
            None => Ok(default),
            Some(s) if s.variable == default.variable => Ok(s),
            Some(s) => Err(HarnessError::validation(
                "sweep.variable",
                format!(
                    "this run sweeps `{}`, not `{}`",
                    default.variable.as_str(),
                    s.variable.as_str()
                ),
            )),
        }
    }
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.to_owned(),
        source,
    })?;
    parse_spec(&text, path)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates spec text; `path` is used in messages only.
pub fn parse_spec(text: &str, path: &Path) -> Result<ExperimentSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        HarnessError::Parse {
            path: path.to_owned(),
            line,
            column,
            message: e.message().to_owned(),
        }
    })?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    build(raw, hash)
}

fn core_validation(e: precert_core::Error) -> HarnessError {
    match e {
        precert_core::Error::InvalidParameter { name, reason } => {
            HarnessError::validation(name, reason)
        }
        other => HarnessError::Core(other),
    }
}

fn build(raw: RawSpec, hash: String) -> Result<ExperimentSpec> {
    let mode: Mode = raw
        .mode
        .as_deref()
        .unwrap_or("precert")
        .parse()
        .map_err(core_validation)?;
    let mut scenario = match mode {
        Mode::Precert => baseline::scenario(Mode::Precert),
        Mode::Direct => baseline::direct_scenario(),
    };
    if let Some(v) = raw.alice_detected_singles {
        scenario.alice_detected_singles = v;
    }
    if let Some(v) = raw.alice_herald_rate {
        scenario.alice_herald_rate = v;
    }
    if let Some(v) = raw.window {
        scenario.window.width = v;
    }
    if let Some(s) = raw.input_state {
        let b: Basis = s.parse().map_err(core_validation)?;
        scenario.input_state = QubitState::from_label(b);
    }
    if let Some(b) = raw.budget {
        let t = &mut scenario.budget;
        for (slot, v) in [
            (&mut t.coupling_before_pdc_db, b.coupling_before_pdc_db),
            (&mut t.pdc_efficiency_db, b.pdc_efficiency_db),
            (&mut t.flag_coupling_db, b.flag_coupling_db),
            (&mut t.signal_coupling_db, b.signal_coupling_db),
            (&mut t.channel_loss_db, b.channel_loss_db),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
    for (label, d) in raw.detectors.unwrap_or_default() {
        let l: DetectorLabel = label.parse().map_err(|_| {
            HarnessError::validation("detectors", format!("unknown detector `{label}`"))
        })?;
        let spec = scenario
            .detector_mut(l)
            .expect("default list has every detector");
        for (slot, v) in [
            (&mut spec.efficiency, d.efficiency),
            (&mut spec.dark_rate, d.dark_rate),
            (&mut spec.jitter, d.jitter),
            (&mut spec.stray_rate, d.stray_rate),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
    let mut noise: NoiseParams<f64> = CALIBRATED_NOISE;
    if let Some(n) = raw.noise {
        for (slot, v) in [
            (
                &mut noise.interferometer_dephasing,
                n.interferometer_dephasing,
            ),
            (&mut noise.pockels_phase_error, n.pockels_phase_error),
            (&mut noise.residual_rotation, n.residual_rotation),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
    scenario.noise = noise;
    scenario.validate().map_err(core_validation)?;

    let herald_mode: HeraldMode = raw
        .herald_mode
        .as_deref()
        .unwrap_or(HeraldMode::DOnly.as_str())
        .parse()
        .map_err(core_validation)?;

    let sweep = raw
        .sweep
        .map(|s| {
            let variable = match s.variable.as_str() {
                "channel_loss_db" => SweepVariable::ChannelLoss,
                "total_loss_db" => SweepVariable::TotalLoss,
                other => {
                    return Err(HarnessError::validation(
                        "sweep.variable",
                        format!("unknown variable `{other}`"),
                    ))
                }
            };
            Sweep::new(variable, s.start, s.stop, s.step)
        })
        .transpose()?;

    let mut tomography = TomographySpec::default();
    if let Some(t) = raw.tomography {
        tomography.counts_per_setting = t
            .counts_per_setting
            .unwrap_or(tomography.counts_per_setting);
        tomography.resamples = t.resamples.unwrap_or(tomography.resamples);
        tomography.dark_fraction = t.dark_fraction.unwrap_or(tomography.dark_fraction);
    }
    if !(tomography.counts_per_setting > 0.0 && tomography.counts_per_setting.is_finite()) {
        return Err(HarnessError::validation(
            "tomography.counts_per_setting",
            "must be > 0",
        ));
    }
    if tomography.resamples < precert_core::tomography::MIN_RESAMPLES {
        return Err(HarnessError::validation(
            "tomography.resamples",
            format!(
                "must be at least {}",
                precert_core::tomography::MIN_RESAMPLES
            ),
        ));
    }
    if !(0.0..1.0).contains(&tomography.dark_fraction) {
        return Err(HarnessError::validation(
            "tomography.dark_fraction",
            "must lie in [0, 1)",
        ));
    }

    let duration = raw.duration.unwrap_or(DEFAULT_DURATION);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(HarnessError::validation("duration", "must be > 0"));
    }
    let direct_dark_scale = raw
        .fig4
        .and_then(|f| f.direct_dark_scale)
        .unwrap_or(DEFAULT_DIRECT_DARK_SCALE);
    if !(direct_dark_scale >= 0.0 && direct_dark_scale.is_finite()) {
        return Err(HarnessError::validation(
            "fig4.direct_dark_scale",
            "must be finite and ≥ 0",
        ));
    }

    let (variants, threshold) = match raw.fig5 {
        Some(f) => (
            f.variants
                .map(|v| {
                    v.iter()
                        .map(|s| Variant::parse(s))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?,
            f.threshold,
        ),
        None => (None, None),
    };
    let variants =
        variants.unwrap_or_else(|| vec![Variant::Scenario, Variant::NearTerm, Variant::Improved]);
    if variants.is_empty() || variants.len() > 3 {
        return Err(HarnessError::validation(
            "fig5.variants",
            "between one and three variants",
        ));
    }
    let threshold = threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(HarnessError::validation(
            "fig5.threshold",
            "must lie in (0, 1)",
        ));
    }

    let targets = match raw.calibration {
        None => MEASURED_TARGETS.to_vec(),
        Some(c) => c
            .targets
            .into_iter()
            .map(|t| {
                let mode: HeraldMode = t.mode.parse().map_err(core_validation)?;
                let reference = match t.reference {
                    Some(r) => r.parse()?,
                    None => Reference::natural(mode),
                };
                if !(t.value > 0.0 && t.value <= 1.0) {
                    return Err(HarnessError::validation(
                        "calibration.targets.value",
                        "must lie in (0, 1]",
                    ));
                }
                Ok(FidelityTarget {
                    mode,
                    reference,
                    value: t.value,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if targets.is_empty() {
        return Err(HarnessError::validation(
            "calibration.targets",
            "at least one target is required",
        ));
    }

    Ok(ExperimentSpec {
        scenario,
        herald_mode,
        sweep,
        tomography,
        duration,
        direct_dark_scale,
        variants,
        threshold,
        targets,
        output: raw.output,
        seed: raw.seed,
        hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_and_column() {
        assert_eq!(line_column("ab\ncde", 4), (2, 2));
        assert_eq!(line_column("x", 0), (1, 1));
    }

    #[test]
    fn sweep_values_include_stop() {
        let s = Sweep::new(SweepVariable::ChannelLoss, 0.0, 1.0, 0.1).unwrap();
        let v = s.values();
        assert_eq!(v.len(), 11);
        assert!((v[10] - 1.0).abs() < 1e-12);
    }
}
