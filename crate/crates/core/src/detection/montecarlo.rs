//! Stochastic twin of [`analytic_rates`](super::analytic_rates).
//!
//! The run is cut into chunks, each with its own ChaCha stream selected by
//! the chunk index, so the result depends only on `(config, duration, seed)`.
//! Chunk tallies are integers and are summed, which makes the reduction
//! order irrelevant.
//!
//! Within a chunk of length τ: heralds, heralded photons, unheralded photons
//! and dark counts are Poisson; transmission, detection, port choice and
//! window capture are binomial thinnings. Accidental coincidences are drawn
//! as Poisson variables whose mean is built from the realised singles counts
//! of the chunk (`n₁·n₂·w/τ`, plus the three-fold terms).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use super::{Coincidence, CountRecord, Mode, Optics, ScenarioConfig};
use crate::error::{Error, Result};

const MAX_CHUNKS: u64 = 4096;

/// Integer event counts over a whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CountTally {
    pub singles: [u64; 5],
    pub herald_flag_true: u64,
    pub herald_flag_accidental: u64,
    pub flag_signal_true: u64,
    pub flag_signal_accidental: u64,
    pub triple_true: u64,
    pub triple_accidental: u64,
    /// Heralded photons sent into the channel.
    pub heralded_emissions: u64,
}

impl std::ops::Add for CountTally {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        for (a, b) in self.singles.iter_mut().zip(o.singles) {
            *a += b;
        }
        self.herald_flag_true += o.herald_flag_true;
        self.herald_flag_accidental += o.herald_flag_accidental;
        self.flag_signal_true += o.flag_signal_true;
        self.flag_signal_accidental += o.flag_signal_accidental;
        self.triple_true += o.triple_true;
        self.triple_accidental += o.triple_accidental;
        self.heralded_emissions += o.heralded_emissions;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloRecord {
    /// Counts divided by the duration.
    pub rates: CountRecord,
    pub tally: CountTally,
    pub duration: f64,
}

impl MonteCarloRecord {
    /// Poisson standard error of a rate estimated from `count` events.
    pub fn standard_error(&self, count: u64) -> f64 {
        (count as f64).sqrt() / self.duration
    }

    /// `(true, accidental)` counts of the reported pattern.
    pub fn reported_counts(&self, mode: Mode) -> (u64, u64) {
        let t = &self.tally;
        match mode {
            Mode::Direct => (t.herald_flag_true, t.herald_flag_accidental),
            Mode::Precert => (t.triple_true, t.triple_accidental),
        }
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // Parameter is finite and positive, so construction cannot fail.
    Poisson::new(mean)
        .map(|d| d.sample(rng) as u64)
        .unwrap_or(0)
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|d| d.sample(rng)).unwrap_or(0)
}

/// Detection outcome of a batch of pairs at Bob.
struct PairClicks {
    flag: [u64; 2],
    signal: [u64; 2],
    /// Pairs with a click in both arms.
    both: u64,
}

fn detect_pairs<R: Rng>(rng: &mut R, o: &Optics, pairs: u64) -> PairClicks {
    let (f, s) = (o.flag(), o.signal());
    let n_flag = binomial(rng, pairs, f);
    let n_signal_only_pool = pairs - n_flag;
    let both = binomial(rng, n_flag, s);
    let signal_without_flag = binomial(rng, n_signal_only_pool, s);
    let split = |rng: &mut R, n: u64, ports: [f64; 2]| {
        let tot = ports[0] + ports[1];
        let a = if tot > 0.0 {
            binomial(rng, n, ports[0] / tot)
        } else {
            0
        };
        [a, n - a]
    };
    let flag = split(rng, n_flag, o.flag_port);
    let signal = split(rng, both + signal_without_flag, o.signal_port);
    PairClicks { flag, signal, both }
}

fn run_chunk(o: &Optics, tau: f64, seed: u64, chunk: u64) -> CountTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let w = o.window;

    let heralds = poisson(&mut rng, o.herald_true * tau);
    let heralded_emitted = binomial(&mut rng, heralds, o.alice_coupling);
    let unheralded_mean = (o.flux * tau - o.herald_true * o.alice_coupling * tau).max(0.0);
    let unheralded_emitted = poisson(&mut rng, unheralded_mean);

    let heralded_pairs = binomial(&mut rng, heralded_emitted, o.arrive);
    let other_pairs = binomial(&mut rng, unheralded_emitted, o.arrive);

    let h = detect_pairs(&mut rng, o, heralded_pairs);
    let u = detect_pairs(&mut rng, o, other_pairs);

    let darks = [
        poisson(&mut rng, o.flag_noise[0] * tau),
        poisson(&mut rng, o.flag_noise[1] * tau),
        poisson(&mut rng, o.signal_noise[0] * tau),
        poisson(&mut rng, o.signal_noise[1] * tau),
        poisson(&mut rng, o.herald_noise * tau),
    ];
    let singles = [
        h.flag[0] + u.flag[0] + darks[0],
        h.flag[1] + u.flag[1] + darks[1],
        h.signal[0] + u.signal[0] + darks[2],
        h.signal[1] + u.signal[1] + darks[3],
        heralds + darks[4],
    ];
    let n_f = (singles[0] + singles[1]) as f64;
    let n_s = (singles[2] + singles[3]) as f64;
    let n_5 = singles[4] as f64;

    let h_flag = h.flag[0] + h.flag[1];
    let h_signal = h.signal[0] + h.signal[1];
    let hf_true = binomial(&mut rng, h_flag, o.cap_herald_flag);
    let hf_acc = poisson(&mut rng, n_5 * n_f * w / tau);

    let mut t = CountTally {
        singles,
        herald_flag_true: hf_true,
        herald_flag_accidental: hf_acc,
        heralded_emissions: heralded_emitted,
        ..CountTally::default()
    };
    if o.mode == Mode::Precert {
        let fs_true = binomial(&mut rng, h.both + u.both, o.cap_flag_signal);
        let hs_true = binomial(&mut rng, h_signal, o.cap_herald_signal);
        let triple_pairs = binomial(&mut rng, h.both, o.cap_herald_flag);
        let triple_true = binomial(&mut rng, triple_pairs, o.cap_flag_signal);
        t.flag_signal_true = fs_true;
        t.flag_signal_accidental = poisson(&mut rng, n_f * n_s * w / tau);
        t.triple_true = triple_true;
        let triple_mean = (hf_true as f64 * n_s + fs_true as f64 * n_5 + hs_true as f64 * n_f) * w
            / tau
            + n_5 * n_f * n_s * w * w / (tau * tau);
        t.triple_accidental = poisson(&mut rng, triple_mean);
    }
    t
}

/// Sample a counting run of length `duration` seconds.
pub fn monte_carlo_counts(
    cfg: &ScenarioConfig,
    duration: f64,
    seed: u64,
) -> Result<MonteCarloRecord> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be finite and > 0"));
    }
    let o = Optics::new(cfg)?;
    let chunks = (duration.ceil() as u64).clamp(1, MAX_CHUNKS);
    let tau = duration / chunks as f64;
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| run_chunk(&o, tau, seed, c))
        .reduce(CountTally::default, |a, b| a + b);

    let rate = |n: u64| n as f64 / duration;
    let pattern = |t: u64, a: u64| Coincidence {
        true_rate: rate(t),
        accidental_rate: rate(a),
    };
    let rates = CountRecord {
        singles: tally.singles.map(rate),
        herald_flag: pattern(tally.herald_flag_true, tally.herald_flag_accidental),
        flag_signal: pattern(tally.flag_signal_true, tally.flag_signal_accidental),
        triple: pattern(tally.triple_true, tally.triple_accidental),
    };
    Ok(MonteCarloRecord {
        rates,
        tally,
        duration,
    })
}
