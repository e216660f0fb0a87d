//! Photon-counting model: loss budget, detectors, coincidence logic and the
//! heralding efficiency after precertification.
//!
//! Detector roles are fixed: D1/D2 count the flag (D and A ports), D3/D4 the
//! signal analysis ports, D5 Alice's herald. In direct mode the precert stage
//! is removed and D1/D2 analyse Alice's photon directly.
//!
//! Rates follow a uniform-arrival model. True coincidences are the source
//! rate times the product of transmissions and efficiencies along each arm;
//! accidentals between independent streams are `r₁·r₂·τ` for window `τ`,
//! with pair×single and single×single×single terms for the triple pattern.

mod histogram;
mod montecarlo;

use std::fmt;
use std::str::FromStr;

pub use histogram::{monte_carlo_histogram, snr_estimate, FlagSelection, Histogram, SnrEstimate};
pub use montecarlo::{monte_carlo_counts, CountTally, MonteCarloRecord};

use crate::error::{Error, Result};
use crate::protocol::NoiseParams;
use crate::QubitState;

/// Loss in dB → transmission.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Transmission → loss in dB.
pub fn transmission_to_db(t: f64) -> f64 {
    -10.0 * t.log10()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorLabel {
    D1,
    D2,
    D3,
    D4,
    D5,
}

impl DetectorLabel {
    pub const ALL: [DetectorLabel; 5] = [
        DetectorLabel::D1,
        DetectorLabel::D2,
        DetectorLabel::D3,
        DetectorLabel::D4,
        DetectorLabel::D5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DetectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.index() + 1)
    }
}

impl FromStr for DetectorLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DetectorLabel::ALL
            .into_iter()
            .find(|d| d.to_string() == s.trim())
            .ok_or_else(|| Error::invalid("label", format!("unknown detector `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorSpec {
    pub label: DetectorLabel,
    /// Detection efficiency of the detector itself; coupling losses in front
    /// of it live in [`LossBudget`].
    pub efficiency: f64,
    /// Counts per second.
    pub dark_rate: f64,
    /// Timing jitter (standard deviation), seconds.
    pub jitter: f64,
    /// Optional uncorrelated background (stray light), counts per second.
    pub stray_rate: f64,
}

impl DetectorSpec {
    pub fn new(label: DetectorLabel, efficiency: f64, dark_rate: f64, jitter: f64) -> Self {
        Self {
            label,
            efficiency,
            dark_rate,
            jitter,
            stray_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid(
                "efficiency",
                format!("{} out of [0, 1] for {}", self.efficiency, self.label),
            ));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate),
            ("jitter", self.jitter),
            ("stray_rate", self.stray_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and ≥ 0 for {}", self.label),
                ));
            }
        }
        Ok(())
    }

    /// Uncorrelated click rate (dark counts plus stray light).
    pub fn noise_rate(&self) -> f64 {
        self.dark_rate + self.stray_rate
    }
}

/// Losses in dB (positive numbers).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBudget {
    pub coupling_before_pdc_db: f64,
    /// Down-conversion probability per incoming photon, as a loss.
    pub pdc_efficiency_db: f64,
    pub flag_coupling_db: f64,
    pub signal_coupling_db: f64,
    /// Added Alice→Bob channel loss (the swept variable).
    pub channel_loss_db: f64,
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("coupling_before_pdc_db", self.coupling_before_pdc_db),
            ("pdc_efficiency_db", self.pdc_efficiency_db),
            ("flag_coupling_db", self.flag_coupling_db),
            ("signal_coupling_db", self.signal_coupling_db),
            ("channel_loss_db", self.channel_loss_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "loss must be finite and ≥ 0 dB"));
            }
        }
        Ok(())
    }

    /// Loss of the precertification stage excluding detectors and channel.
    pub fn precert_loss_db(&self) -> f64 {
        self.coupling_before_pdc_db
            + self.pdc_efficiency_db
            + self.flag_coupling_db
            + self.signal_coupling_db
    }

    pub fn with_channel_loss(mut self, db: f64) -> Self {
        self.channel_loss_db = db;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoincidenceWindow {
    /// Full bin width (diameter), seconds.
    pub width: f64,
}

impl CoincidenceWindow {
    pub fn new(width: f64) -> Result<Self> {
        let w = Self { width };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::invalid("window", "width must be > 0"));
        }
        Ok(())
    }

    /// Fraction of jitter-broadened true coincidences (Gaussian, standard
    /// deviation `sigma`) falling inside the window. Taken as 1 unless the
    /// window is narrower than 4σ.
    pub fn capture(&self, sigma: f64) -> f64 {
        if sigma <= 0.0 || self.width >= 4.0 * sigma {
            1.0
        } else {
            libm::erf(self.width / (2.0 * std::f64::consts::SQRT_2 * sigma))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Direct,
    Precert,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Direct => "direct",
            Mode::Precert => "precert",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "precert" => Ok(Mode::Precert),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Reference experimental parameters.
pub mod baseline {
    use super::*;

    pub const ALICE_DIRECT_SINGLES: f64 = 1.2e7;
    pub const COUPLING_BEFORE_PDC_DB: f64 = 6.0;
    pub const PDC_EFFICIENCY_DB: f64 = 55.0;
    pub const FLAG_COUPLING_DB: f64 = 5.0;
    pub const SIGNAL_COUPLING_DB: f64 = 5.0;
    pub const WINDOW: f64 = 2.3e-9;
    /// Quoted D1–D4 efficiencies. These are system figures that already
    /// contain the 5 dB fibre coupling after the crystal.
    pub const SYSTEM_EFFICIENCIES: [f64; 4] = [0.10, 0.14, 0.19, 0.19];
    pub const DARK_RATES: [f64; 4] = [550.0, 160.0, 1500.0, 1000.0];
    /// Not quoted; nanowire-typical.
    pub const BOB_JITTER: f64 = 100e-12;
    /// Alice's herald APD (not quoted): efficiency and dark rate.
    pub const D5_EFFICIENCY: f64 = 0.8;
    pub const D5_DARK_RATE: f64 = 250.0;
    /// Not quoted. Fixes the fraction of heralds whose partner enters the
    /// channel at `ALICE_DIRECT_SINGLES · D5_EFFICIENCY / ALICE_HERALD_RATE = 0.2`.
    pub const ALICE_HERALD_RATE: f64 = 4.8e7;
    pub const CERTIFIED_PAIRS_PER_HOUR: f64 = 1100.0;

    pub fn budget() -> LossBudget {
        LossBudget {
            coupling_before_pdc_db: COUPLING_BEFORE_PDC_DB,
            pdc_efficiency_db: PDC_EFFICIENCY_DB,
            flag_coupling_db: FLAG_COUPLING_DB,
            signal_coupling_db: SIGNAL_COUPLING_DB,
            channel_loss_db: 0.0,
        }
    }

    pub fn detectors() -> Vec<DetectorSpec> {
        let coupling = [
            FLAG_COUPLING_DB,
            FLAG_COUPLING_DB,
            SIGNAL_COUPLING_DB,
            SIGNAL_COUPLING_DB,
        ];
        let mut out: Vec<DetectorSpec> = (0..4)
            .map(|i| {
                DetectorSpec::new(
                    DetectorLabel::ALL[i],
                    SYSTEM_EFFICIENCIES[i] / db_to_transmission(coupling[i]),
                    DARK_RATES[i],
                    BOB_JITTER,
                )
            })
            .collect();
        out.push(DetectorSpec::new(
            DetectorLabel::D5,
            D5_EFFICIENCY,
            D5_DARK_RATE,
            0.0,
        ));
        out
    }

    /// Flag detectors with 1 dark count/s (arm total), 10% system
    /// efficiency and 100 ps jitter; 100 ps window.
    pub fn near_term_scenario() -> ScenarioConfig {
        let mut c = scenario(Mode::Precert);
        c.window = CoincidenceWindow { width: 100e-12 };
        let eff = 0.10 / db_to_transmission(c.budget.flag_coupling_db);
        for d in c.detectors.iter_mut() {
            if matches!(d.label, DetectorLabel::D1 | DetectorLabel::D2) {
                d.efficiency = eff;
                d.dark_rate = 0.5;
                d.jitter = 100e-12;
            }
        }
        c
    }

    /// Flag detectors with 1e-3 dark counts/s (arm total) and 2.3%
    /// efficiency, 80% coupling after the crystal on both arms, 90% signal
    /// detectors (η_signal = 0.72), negligible jitter, 100 ps window.
    pub fn improved_scenario() -> ScenarioConfig {
        let mut c = scenario(Mode::Precert);
        c.window = CoincidenceWindow { width: 100e-12 };
        c.budget.flag_coupling_db = transmission_to_db(0.8);
        c.budget.signal_coupling_db = transmission_to_db(0.8);
        for d in c.detectors.iter_mut() {
            match d.label {
                DetectorLabel::D1 | DetectorLabel::D2 => {
                    d.efficiency = 0.023;
                    d.dark_rate = 0.5e-3;
                    d.jitter = 0.0;
                }
                DetectorLabel::D3 | DetectorLabel::D4 => {
                    d.efficiency = 0.9;
                    d.jitter = 0.0;
                }
                DetectorLabel::D5 => {}
            }
        }
        c
    }

    /// Direct transmission: precert stage removed, D1/D2 replaced by
    /// detectors of equal efficiency and half the dark rate.
    pub fn direct_scenario() -> ScenarioConfig {
        let mut c = scenario(Mode::Direct);
        for d in c.detectors.iter_mut() {
            if matches!(d.label, DetectorLabel::D1 | DetectorLabel::D2) {
                d.dark_rate *= 0.5;
            }
        }
        c
    }

    pub fn scenario(mode: Mode) -> ScenarioConfig {
        ScenarioConfig {
            mode,
            alice_detected_singles: ALICE_DIRECT_SINGLES,
            alice_herald_rate: ALICE_HERALD_RATE,
            detectors: detectors(),
            budget: budget(),
            window: CoincidenceWindow { width: WINDOW },
            noise: NoiseParams::ideal(),
            input_state: QubitState::from_label(crate::Basis::H),
        }
    }
}

/// Full description of one counting experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub mode: Mode,
    /// Alice's photon flux into the channel, referenced to a direct
    /// measurement (counts per second).
    pub alice_detected_singles: f64,
    /// True herald detections at D5 (counts per second, excluding darks).
    pub alice_herald_rate: f64,
    pub detectors: Vec<DetectorSpec>,
    pub budget: LossBudget,
    pub window: CoincidenceWindow,
    pub noise: NoiseParams<f64>,
    pub input_state: QubitState,
}

impl ScenarioConfig {
    pub fn detector(&self, label: DetectorLabel) -> Result<&DetectorSpec> {
        self.detectors
            .iter()
            .find(|d| d.label == label)
            .ok_or_else(|| Error::invalid("detectors", format!("missing {label}")))
    }

    pub fn detector_mut(&mut self, label: DetectorLabel) -> Option<&mut DetectorSpec> {
        self.detectors.iter_mut().find(|d| d.label == label)
    }

    pub fn with_channel_loss(&self, db: f64) -> Self {
        let mut c = self.clone();
        c.budget.channel_loss_db = db;
        c
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alice_detected_singles", self.alice_detected_singles),
            ("alice_herald_rate", self.alice_herald_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "rate must be finite and ≥ 0"));
            }
        }
        self.budget.validate()?;
        self.window.validate()?;
        self.noise.validate()?;
        for d in &self.detectors {
            d.validate()?;
        }
        let needed: &[DetectorLabel] = match self.mode {
            Mode::Direct => &[DetectorLabel::D1, DetectorLabel::D2, DetectorLabel::D5],
            Mode::Precert => &DetectorLabel::ALL,
        };
        for &l in needed {
            self.detector(l)?;
        }
        let a = self.alice_coupling()?;
        if a > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "alice_herald_rate",
                format!("implies {a:.3} photons per herald entering the channel (> 1)"),
            ));
        }
        Ok(())
    }

    /// Probability that a true D5 herald has its partner photon in the
    /// channel: `singles · η₅ / herald_rate`.
    pub fn alice_coupling(&self) -> Result<f64> {
        if self.alice_herald_rate <= 0.0 {
            return Ok(0.0);
        }
        let eta5 = self.detector(DetectorLabel::D5)?.efficiency;
        Ok(self.alice_detected_singles * eta5 / self.alice_herald_rate)
    }

    /// Combined efficiency of the flag (or direct) arm `D1 ∨ D2`, coupling
    /// included, with the photon split evenly between the two ports.
    pub fn flag_arm_efficiency(&self) -> Result<f64> {
        let t = db_to_transmission(self.budget.flag_coupling_db);
        let e1 = self.detector(DetectorLabel::D1)?.efficiency;
        let e2 = self.detector(DetectorLabel::D2)?.efficiency;
        Ok(t * 0.5 * (e1 + e2))
    }

    /// η_signal: signal coupling times the mean signal detector efficiency.
    pub fn signal_arm_efficiency(&self) -> Result<f64> {
        let t = db_to_transmission(self.budget.signal_coupling_db);
        let e3 = self.detector(DetectorLabel::D3)?.efficiency;
        let e4 = self.detector(DetectorLabel::D4)?.efficiency;
        Ok(t * 0.5 * (e3 + e4))
    }

    /// Fixed loss between Alice's fibre and a detected flag photon: the
    /// precert stage plus the flag detectors (signal detectors excluded).
    /// Zero in direct mode, where the analysis detectors are likewise
    /// excluded.
    pub fn total_loss_offset_db(&self) -> Result<f64> {
        match self.mode {
            Mode::Direct => Ok(0.0),
            Mode::Precert => {
                let e1 = self.detector(DetectorLabel::D1)?.efficiency;
                let e2 = self.detector(DetectorLabel::D2)?.efficiency;
                Ok(self.budget.precert_loss_db() + transmission_to_db(0.5 * (e1 + e2)))
            }
        }
    }

    pub fn total_loss_db(&self) -> Result<f64> {
        Ok(self.budget.channel_loss_db + self.total_loss_offset_db()?)
    }
}

/// Per-arm probabilities and rates derived from a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Optics {
    pub mode: Mode,
    pub window: f64,
    /// Photons per second entering the channel.
    pub flux: f64,
    pub herald_true: f64,
    pub herald_noise: f64,
    pub alice_coupling: f64,
    /// Probability a channel photon yields a pair at Bob's crystal output
    /// (direct mode: reaches the analysis optics).
    pub arrive: f64,
    /// Per-pair click probabilities of each Bob detector (port split included).
    pub flag_port: [f64; 2],
    pub signal_port: [f64; 2],
    pub flag_noise: [f64; 2],
    pub signal_noise: [f64; 2],
    pub cap_herald_flag: f64,
    pub cap_flag_signal: f64,
    pub cap_herald_signal: f64,
}

impl Optics {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let d = |l| cfg.detector(l);
        let b = &cfg.budget;
        let t_ch = db_to_transmission(b.channel_loss_db);
        let t_fc = db_to_transmission(b.flag_coupling_db);
        let t_sc = db_to_transmission(b.signal_coupling_db);
        let d1 = d(DetectorLabel::D1)?;
        let d2 = d(DetectorLabel::D2)?;
        let d5 = d(DetectorLabel::D5)?;
        let win = cfg.window;
        let flag_sigma = d1.jitter.max(d2.jitter);
        let (arrive, signal_port, signal_noise, signal_sigma) = match cfg.mode {
            Mode::Direct => (t_ch, [0.0; 2], [0.0; 2], 0.0),
            Mode::Precert => {
                let d3 = d(DetectorLabel::D3)?;
                let d4 = d(DetectorLabel::D4)?;
                (
                    t_ch * db_to_transmission(b.coupling_before_pdc_db)
                        * db_to_transmission(b.pdc_efficiency_db),
                    [0.5 * t_sc * d3.efficiency, 0.5 * t_sc * d4.efficiency],
                    [d3.noise_rate(), d4.noise_rate()],
                    d3.jitter.max(d4.jitter),
                )
            }
        };
        let combine = |a: f64, b: f64| (a * a + b * b).sqrt();
        Ok(Self {
            mode: cfg.mode,
            window: win.width,
            flux: cfg.alice_detected_singles,
            herald_true: cfg.alice_herald_rate,
            herald_noise: d5.noise_rate(),
            alice_coupling: cfg.alice_coupling()?,
            arrive,
            flag_port: [0.5 * t_fc * d1.efficiency, 0.5 * t_fc * d2.efficiency],
            signal_port,
            flag_noise: [d1.noise_rate(), d2.noise_rate()],
            signal_noise,
            cap_herald_flag: win.capture(combine(d5.jitter, flag_sigma)),
            cap_flag_signal: win.capture(combine(flag_sigma, signal_sigma)),
            cap_herald_signal: win.capture(combine(d5.jitter, signal_sigma)),
        })
    }

    pub fn flag(&self) -> f64 {
        self.flag_port[0] + self.flag_port[1]
    }

    pub fn signal(&self) -> f64 {
        self.signal_port[0] + self.signal_port[1]
    }

    /// Pairs (or direct photons) per second leaving the crystal.
    pub fn pair_rate(&self) -> f64 {
        self.flux * self.arrive
    }

    pub fn singles(&self) -> [f64; 5] {
        let p = self.pair_rate();
        [
            p * self.flag_port[0] + self.flag_noise[0],
            p * self.flag_port[1] + self.flag_noise[1],
            p * self.signal_port[0] + self.signal_noise[0],
            p * self.signal_port[1] + self.signal_noise[1],
            self.herald_true + self.herald_noise,
        ]
    }

    /// Heralded pairs per second at the crystal output.
    pub fn heralded_pair_rate(&self) -> f64 {
        self.herald_true * self.alice_coupling * self.arrive
    }
}

/// True and accidental parts of one coincidence pattern (per second).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coincidence {
    pub true_rate: f64,
    pub accidental_rate: f64,
}

impl Coincidence {
    pub fn total(&self) -> f64 {
        self.true_rate + self.accidental_rate
    }
}

/// Singles and coincidence rates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CountRecord {
    /// D1..D5 click rates.
    pub singles: [f64; 5],
    /// `D5 ∧ (D1 ∨ D2)`.
    pub herald_flag: Coincidence,
    /// `(D1 ∨ D2) ∧ (D3 ∨ D4)`; zero in direct mode.
    pub flag_signal: Coincidence,
    /// `D5 ∧ (D1 ∨ D2) ∧ (D3 ∨ D4)`; zero in direct mode.
    pub triple: Coincidence,
}

impl CountRecord {
    /// The pattern whose rate the experiment reports for this mode.
    pub fn reported(&self, mode: Mode) -> Coincidence {
        match mode {
            Mode::Direct => self.herald_flag,
            Mode::Precert => self.triple,
        }
    }
}

/// Closed-form expected rates.
pub fn analytic_rates(cfg: &ScenarioConfig) -> Result<CountRecord> {
    let o = Optics::new(cfg)?;
    Ok(rates_from_optics(&o))
}

pub(crate) fn rates_from_optics(o: &Optics) -> CountRecord {
    let w = o.window;
    let singles = o.singles();
    let r_flag = singles[0] + singles[1];
    let r_signal = singles[2] + singles[3];
    let r_herald = singles[4];
    let hp = o.heralded_pair_rate();
    let (f, s) = (o.flag(), o.signal());

    let hf_true = hp * f * o.cap_herald_flag;
    let herald_flag = Coincidence {
        true_rate: hf_true,
        accidental_rate: r_herald * r_flag * w,
    };
    if o.mode == Mode::Direct {
        return CountRecord {
            singles,
            herald_flag,
            ..CountRecord::default()
        };
    }
    let fs_true = o.pair_rate() * f * s * o.cap_flag_signal;
    let hs_true = hp * s * o.cap_herald_signal;
    let triple_true = hp * f * s * o.cap_herald_flag * o.cap_flag_signal;
    CountRecord {
        singles,
        herald_flag,
        flag_signal: Coincidence {
            true_rate: fs_true,
            accidental_rate: r_flag * r_signal * w,
        },
        triple: Coincidence {
            true_rate: triple_true,
            accidental_rate: hf_true * r_signal * w
                + fs_true * r_herald * w
                + hs_true * r_flag * w
                + r_herald * r_flag * r_signal * w * w,
        },
    }
}

/// `η_h = η_signal / (1 + p_dark / p_flag)`.
pub fn heralding_efficiency(eta_signal: f64, p_dark: f64, p_flag: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta_signal) {
        return Err(Error::invalid("eta_signal", "must lie in [0, 1]"));
    }
    if p_dark < 0.0 || p_flag < 0.0 {
        return Err(Error::invalid("p_dark/p_flag", "probabilities must be ≥ 0"));
    }
    if p_flag == 0.0 && p_dark == 0.0 {
        return Err(Error::UndefinedHeralding);
    }
    if p_flag == 0.0 {
        return Ok(0.0);
    }
    Ok(eta_signal / (1.0 + p_dark / p_flag))
}

/// Inputs to the heralding formula for a scenario, per D5 trigger.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeraldingTerms {
    pub eta_signal: f64,
    /// Accidental flag click probability in the window.
    pub p_dark: f64,
    /// Probability of a true flag photon.
    pub p_flag: f64,
}

impl HeraldingTerms {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let mut c = cfg.clone();
        c.mode = Mode::Precert;
        let o = Optics::new(&c)?;
        let singles = o.singles();
        let r_herald = singles[4];
        let (p_flag, p_dark) = if r_herald > 0.0 {
            (
                o.heralded_pair_rate() * o.flag() * o.cap_herald_flag / r_herald,
                (singles[0] + singles[1]) * o.window,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            eta_signal: o.signal() * o.cap_flag_signal,
            p_dark,
            p_flag,
        })
    }

    pub fn efficiency(&self) -> Result<f64> {
        heralding_efficiency(self.eta_signal, self.p_dark, self.p_flag)
    }
}

/// Heralding efficiency after precertification for a scenario.
pub fn scenario_heralding(cfg: &ScenarioConfig) -> Result<f64> {
    HeraldingTerms::from_config(cfg)?.efficiency()
}

/// Probability that Bob registers a click given a D5 trigger, without
/// precertification (direct mode).
pub fn direct_heralding(cfg: &ScenarioConfig) -> Result<f64> {
    let mut c = cfg.clone();
    c.mode = Mode::Direct;
    let r = analytic_rates(&c)?;
    let r5 = r.singles[4];
    if r5 <= 0.0 {
        return Err(Error::UndefinedHeralding);
    }
    Ok(r.herald_flag.total() / r5)
}

/// Observed fidelity when true events (fidelity `true_fidelity`) are mixed
/// with accidentals carrying no polarization information.
pub fn fidelity_from_rates(signal: f64, noise: f64, true_fidelity: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&true_fidelity) {
        return Err(Error::invalid("true_fidelity", "must lie in [0, 1]"));
    }
    let total = signal + noise;
    if total.is_nan() || total <= 0.0 {
        return Err(Error::UndefinedFidelity);
    }
    Ok((signal * true_fidelity + 0.5 * noise) / total)
}

/// Fidelity of the reported coincidence pattern at the scenario's loss.
pub fn fidelity_vs_loss(cfg: &ScenarioConfig, true_fidelity: f64) -> Result<f64> {
    let c = analytic_rates(cfg)?.reported(cfg.mode);
    fidelity_from_rates(c.true_rate, c.accidental_rate, true_fidelity)
}

const MAX_SEARCH_DB: f64 = 400.0;

/// Channel loss (dB) at which the heralding efficiency falls to `threshold`.
pub fn threshold_crossing(cfg: &ScenarioConfig, threshold: f64) -> Result<f64> {
    let eta_at = |db: f64| scenario_heralding(&cfg.with_channel_loss(db));
    let start = eta_at(0.0)?;
    if start.is_nan() || start <= threshold {
        return Err(Error::invalid(
            "threshold",
            format!("heralding efficiency at zero channel loss ({start:.4}) does not exceed {threshold}"),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 10.0;
    while eta_at(hi)? > threshold {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_DB {
            return Err(Error::UnreachableThreshold {
                threshold,
                searched_db: MAX_SEARCH_DB,
            });
        }
    }
    while hi - lo > 1e-3 {
        let mid = 0.5 * (lo + hi);
        if eta_at(mid)? > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
