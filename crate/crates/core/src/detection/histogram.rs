//! Start–stop timing histogram of flag/signal two-fold coincidences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use super::{DetectorLabel, Mode, ScenarioConfig};
use crate::error::{Error, Result};

/// Half-span of the histogram around zero delay, seconds.
pub const HISTOGRAM_SPAN: f64 = 50e-9;

/// Which flag detectors start the clock.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum FlagSelection {
    #[default]
    Either,
    D1,
    D2,
}

impl FlagSelection {
    fn includes(self, port: usize) -> bool {
        match self {
            FlagSelection::Either => true,
            FlagSelection::D1 => port == 0,
            FlagSelection::D2 => port == 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// Bin centres, seconds (multiples of the bin width).
    pub centers: Vec<f64>,
    /// Coincidences per second in each bin.
    pub rates: Vec<f64>,
}

impl Histogram {
    pub fn central_index(&self) -> usize {
        self.centers.len() / 2
    }

    /// Expected counts per bin after `duration` seconds.
    pub fn counts(&self, duration: f64) -> Vec<f64> {
        self.rates.iter().map(|r| r * duration).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrEstimate {
    /// `f64::INFINITY` when there are no accidentals.
    pub snr: f64,
    pub histogram: Histogram,
}

struct Arms {
    pair_rate: f64,
    flag: [f64; 2],
    signal: [f64; 2],
    flag_noise: [f64; 2],
    signal_noise: [f64; 2],
    flag_jitter: [f64; 2],
    signal_jitter: [f64; 2],
    window: f64,
}

impl Arms {
    fn new(cfg: &ScenarioConfig, sel: FlagSelection) -> Result<Self> {
        if cfg.mode != Mode::Precert {
            return Err(Error::invalid(
                "mode",
                "timing histogram needs precert mode",
            ));
        }
        let o = super::Optics::new(cfg)?;
        let mut flag = o.flag_port;
        let mut flag_noise = o.flag_noise;
        for p in 0..2 {
            if !sel.includes(p) {
                flag[p] = 0.0;
                flag_noise[p] = 0.0;
            }
        }
        let j = |l| cfg.detector(l).map(|d| d.jitter);
        Ok(Self {
            pair_rate: o.pair_rate(),
            flag,
            signal: o.signal_port,
            flag_noise,
            signal_noise: o.signal_noise,
            flag_jitter: [j(DetectorLabel::D1)?, j(DetectorLabel::D2)?],
            signal_jitter: [j(DetectorLabel::D3)?, j(DetectorLabel::D4)?],
            window: o.window,
        })
    }

    fn half_bins(&self) -> i64 {
        (HISTOGRAM_SPAN / self.window).floor() as i64
    }

    fn centers(&self) -> Vec<f64> {
        let k = self.half_bins();
        (-k..=k).map(|i| i as f64 * self.window).collect()
    }
}

fn normal_cdf(x: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * (1.0 + libm::erf(x / (sigma * std::f64::consts::SQRT_2)))
}

fn snr_from(true_rate: f64, accidental_per_bin: f64, histogram: Histogram) -> SnrEstimate {
    let snr = if accidental_per_bin > 0.0 {
        true_rate / accidental_per_bin
    } else {
        f64::INFINITY
    };
    SnrEstimate { snr, histogram }
}

/// Closed-form histogram and SNR for the `(selected flag) ∧ (D3 ∨ D4)` pattern.
pub fn snr_estimate(cfg: &ScenarioConfig, selection: FlagSelection) -> Result<SnrEstimate> {
    let a = Arms::new(cfg, selection)?;
    let w = a.window;
    let r_flag: f64 = (0..2)
        .map(|p| a.pair_rate * a.flag[p] + a.flag_noise[p])
        .sum();
    let r_signal: f64 = (0..2)
        .map(|p| a.pair_rate * a.signal[p] + a.signal_noise[p])
        .sum();
    let accidental = r_flag * r_signal * w;

    let centers = a.centers();
    let mut rates = vec![accidental; centers.len()];
    let mut central_true = 0.0;
    for fp in 0..2 {
        for sp in 0..2 {
            let amp = a.pair_rate * a.flag[fp] * a.signal[sp];
            if amp == 0.0 {
                continue;
            }
            let sigma = a.flag_jitter[fp].hypot(a.signal_jitter[sp]);
            for (r, &c) in rates.iter_mut().zip(&centers) {
                *r += amp * (normal_cdf(c + 0.5 * w, sigma) - normal_cdf(c - 0.5 * w, sigma));
            }
            central_true += amp * (normal_cdf(0.5 * w, sigma) - normal_cdf(-0.5 * w, sigma));
        }
    }
    Ok(snr_from(
        central_true,
        accidental,
        Histogram {
            bin_width: w,
            centers,
            rates,
        },
    ))
}

fn uniform_times<R: Rng>(rng: &mut R, rate: f64, tau: f64, out: &mut Vec<f64>) {
    if rate * tau <= 0.0 {
        return;
    }
    let n = Poisson::new(rate * tau)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0);
    out.extend((0..n).map(|_| rng.random::<f64>() * tau));
}

fn jitter<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .map(|d| d.sample(rng))
            .unwrap_or(0.0)
    } else {
        0.0
    }
}

fn histogram_chunk(a: &Arms, tau: f64, seed: u64, chunk: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let k = a.half_bins();
    let mut bins = vec![0u64; (2 * k + 1) as usize];

    let mut pairs = Vec::new();
    uniform_times(&mut rng, a.pair_rate, tau, &mut pairs);
    let mut starts = Vec::new();
    let mut stops = Vec::new();
    let f_tot = a.flag[0] + a.flag[1];
    let s_tot = a.signal[0] + a.signal[1];
    for t in pairs {
        let u: f64 = rng.random::<f64>();
        if u < a.flag[0] {
            starts.push(t + jitter(&mut rng, a.flag_jitter[0]));
        } else if u < f_tot {
            starts.push(t + jitter(&mut rng, a.flag_jitter[1]));
        }
        let v: f64 = rng.random::<f64>();
        if v < a.signal[0] {
            stops.push(t + jitter(&mut rng, a.signal_jitter[0]));
        } else if v < s_tot {
            stops.push(t + jitter(&mut rng, a.signal_jitter[1]));
        }
    }
    for p in 0..2 {
        uniform_times(&mut rng, a.flag_noise[p], tau, &mut starts);
        uniform_times(&mut rng, a.signal_noise[p], tau, &mut stops);
    }
    stops.sort_by(f64::total_cmp);

    let w = a.window;
    let reach = (k as f64 + 0.5) * w;
    for &t0 in &starts {
        let lo = stops.partition_point(|&s| s < t0 - reach);
        for &s in stops[lo..].iter().take_while(|&&s| s <= t0 + reach) {
            let idx = ((s - t0) / w).round() as i64;
            if idx.abs() <= k {
                bins[(idx + k) as usize] += 1;
            }
        }
    }
    bins
}

/// Time-tag simulation of the same histogram over `duration` seconds.
///
/// The SNR is the central bin over the mean of the bins more than five
/// jitter widths away from zero delay.
pub fn monte_carlo_histogram(
    cfg: &ScenarioConfig,
    selection: FlagSelection,
    duration: f64,
    seed: u64,
) -> Result<SnrEstimate> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be finite and > 0"));
    }
    let a = Arms::new(cfg, selection)?;
    let chunks = (duration.ceil() as u64).max(1);
    let tau = duration / chunks as f64;
    let bins = (0..chunks)
        .into_par_iter()
        .map(|c| histogram_chunk(&a, tau, seed, c))
        .reduce(
            || vec![0u64; (2 * a.half_bins() + 1) as usize],
            |mut x, y| {
                x.iter_mut().zip(y).for_each(|(p, q)| *p += q);
                x
            },
        );
    let centers = a.centers();
    let sigma = a
        .flag_jitter
        .iter()
        .fold(0.0f64, |m, &v| m.max(v))
        .hypot(a.signal_jitter.iter().fold(0.0f64, |m, &v| m.max(v)));
    let guard = (0.5 * a.window + 5.0 * sigma).max(a.window);
    let off: Vec<u64> = centers
        .iter()
        .zip(&bins)
        .filter(|(c, _)| c.abs() > guard)
        .map(|(_, &b)| b)
        .collect();
    let mid = bins[centers.len() / 2] as f64;
    let acc_mean = if off.is_empty() {
        0.0
    } else {
        off.iter().sum::<u64>() as f64 / off.len() as f64
    };
    let histogram = Histogram {
        bin_width: a.window,
        centers,
        rates: bins.iter().map(|&b| b as f64 / duration).collect(),
    };
    Ok(snr_from(
        (mid - acc_mean) / duration,
        acc_mean / duration,
        histogram,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::baseline;

    #[test]
    fn infinite_without_noise() {
        let mut c = baseline::scenario(Mode::Precert);
        for d in c.detectors.iter_mut() {
            d.dark_rate = 0.0;
        }
        c.alice_detected_singles = 0.0;
        c.alice_herald_rate = 0.0;
        assert_eq!(
            snr_estimate(&c, FlagSelection::Either).unwrap().snr,
            f64::INFINITY
        );
    }

    #[test]
    fn histogram_shape() {
        let c = baseline::scenario(Mode::Precert);
        let h = snr_estimate(&c, FlagSelection::D2).unwrap().histogram;
        assert_eq!(h.centers.len(), 2 * 21 + 1);
        let mid = h.central_index();
        assert!(h.rates[mid] > 10.0 * h.rates[0]);
        assert!((h.rates[0] - h.rates[h.rates.len() - 1]).abs() < 1e-15);
    }
}
