//! Simulated tomography data and maximum-likelihood reconstruction.
//!
//! A dataset is a flat list of `(input, setting, flag tag, counts)` rows.
//! Inputs and analysis settings are the six polarization eigenstates.

mod bootstrap;
mod mle;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub use bootstrap::{bootstrap_uncertainty, BootstrapSummary, Statistic, MIN_RESAMPLES};
pub use mle::{
    mle_process_reconstruct, mle_process_report, mle_state_reconstruct, mle_state_report,
    MleOptions, MleReport, MAX_ITERATIONS,
};

use crate::error::{Error, Result};
use crate::protocol::FlagOutcome;
use crate::{apply_channel, Basis, ProcessMatrix, QubitState};

/// Which flag outcome a row was recorded under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlagTag {
    D,
    A,
    Pooled,
}

impl FlagTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagTag::D => "D",
            FlagTag::A => "A",
            FlagTag::Pooled => "pooled",
        }
    }
}

impl From<FlagOutcome> for FlagTag {
    fn from(o: FlagOutcome) -> Self {
        match o {
            FlagOutcome::D => FlagTag::D,
            FlagOutcome::A => FlagTag::A,
        }
    }
}

impl fmt::Display for FlagTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlagTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "D" => Ok(FlagTag::D),
            "A" => Ok(FlagTag::A),
            "pooled" => Ok(FlagTag::Pooled),
            other => Err(Error::invalid(
                "flag_outcome",
                format!("unknown flag tag `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Entry {
    pub input: Basis,
    pub setting: Basis,
    pub flag: FlagTag,
    pub counts: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyDataset {
    pub entries: Vec<Entry>,
    /// Seconds.
    pub integration_time: f64,
    pub total_rate_normalization: f64,
}

pub const COLUMNS: [&str; 4] = ["input_label", "setting_label", "flag_outcome", "counts"];

impl TomographyDataset {
    pub fn new(entries: Vec<Entry>) -> Self {
        Self {
            entries,
            integration_time: 1.0,
            total_rate_normalization: 1.0,
        }
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.counts).sum()
    }

    /// Distinct input labels in first-seen order.
    pub fn inputs(&self) -> Vec<Basis> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.input) {
                out.push(e.input);
            }
        }
        out
    }

    pub fn flag_tags(&self) -> Vec<FlagTag> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.flag) {
                out.push(e.flag);
            }
        }
        out
    }

    /// Rows for one input.
    pub fn for_input(&self, input: Basis) -> Self {
        self.filtered(|e| e.input == input)
    }

    /// Rows recorded under one flag tag.
    pub fn for_flag(&self, flag: FlagTag) -> Self {
        self.filtered(|e| e.flag == flag)
    }

    fn filtered(&self, keep: impl Fn(&Entry) -> bool) -> Self {
        Self {
            entries: self.entries.iter().copied().filter(|e| keep(e)).collect(),
            ..*self
        }
    }

    /// Same rows with counts replaced by `f(index, counts)`.
    pub fn map_counts(&self, mut f: impl FnMut(usize, u64) -> u64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| Entry {
                    counts: f(i, e.counts),
                    ..*e
                })
                .collect(),
            ..*self
        }
    }

    /// Comma-separated table: `#` metadata lines, a header row, then rows.
    pub fn write_table<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        writeln!(out, "# integration_time = {}", self.integration_time)?;
        writeln!(
            out,
            "# total_rate_normalization = {}",
            self.total_rate_normalization
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for e in &self.entries {
            w.write_record([
                e.input.as_str(),
                e.setting.as_str(),
                e.flag.as_str(),
                &e.counts.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn to_table(&self) -> String {
        let mut buf = Vec::new();
        self.write_table(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("table is ASCII")
    }

    /// Parses the format written by [`write_table`](Self::write_table).
    /// Tab-separated input is accepted as well.
    pub fn read_table<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input.read_to_string(&mut text).map_err(|e| Error::Table {
            line: 0,
            reason: e.to_string(),
        })?;
        text.parse()
    }
}

impl FromStr for TomographyDataset {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut ds = TomographyDataset::new(Vec::new());
        for (i, line) in text.lines().enumerate() {
            let Some(meta) = line.trim_start().strip_prefix('#') else {
                continue;
            };
            let Some((key, value)) = meta.split_once('=') else {
                continue;
            };
            let parse = |v: &str| {
                v.trim().parse::<f64>().map_err(|e| Error::Table {
                    line: i + 1,
                    reason: format!("{}: {e}", key.trim()),
                })
            };
            match key.trim() {
                "integration_time" => ds.integration_time = parse(value)?,
                "total_rate_normalization" => ds.total_rate_normalization = parse(value)?,
                _ => {}
            }
        }

        let delimiter = if text
            .lines()
            .any(|l| !l.starts_with('#') && l.contains('\t'))
        {
            b'\t'
        } else {
            b','
        };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::Table {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.iter().ne(COLUMNS) {
            return Err(Error::Table {
                line: header.position().map_or(1, |p| p.line() as usize),
                reason: format!("expected header `{}`", COLUMNS.join(",")),
            });
        }
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Table {
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| Error::Table { line, reason };
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", rec.len())));
            }
            let basis = |s: &str| s.parse::<Basis>().map_err(|e| bad(e.to_string()));
            ds.entries.push(Entry {
                input: basis(&rec[0])?,
                setting: basis(&rec[1])?,
                flag: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
                counts: rec[3].parse().map_err(|_| {
                    bad(format!(
                        "counts `{}` is not a non-negative integer",
                        &rec[3]
                    ))
                })?,
            });
        }
        Ok(ds)
    }
}

/// Probability of `setting` on the output of `channel` for `input`, mixed
/// with a fraction `dark` of unpolarized background.
fn expected_probability(
    channel: &ProcessMatrix,
    input: Basis,
    setting: Basis,
    dark: f64,
) -> Result<f64> {
    let out = apply_channel(channel, &QubitState::from_label(input))?;
    Ok((1.0 - dark) * out.probability(setting) + 0.5 * dark)
}

fn check_simulation_args(expected_counts_per_setting: f64, dark_fraction: f64) -> Result<()> {
    if !(expected_counts_per_setting > 0.0 && expected_counts_per_setting.is_finite()) {
        return Err(Error::invalid(
            "expected_counts_per_setting",
            "must be finite and > 0",
        ));
    }
    if !(0.0..1.0).contains(&dark_fraction) {
        return Err(Error::invalid("dark_fraction", "must lie in [0, 1)"));
    }
    Ok(())
}

/// Poisson-sampled counts. `channel` must have unit trace (heralded
/// processes are trace-normalized before simulation). Each row draws from
/// its own random stream, so rows are independent of one another's order.
pub fn simulate_tomography(
    channel: &ProcessMatrix,
    inputs: &[Basis],
    settings: &[Basis],
    flag: FlagTag,
    expected_counts_per_setting: f64,
    seed: u64,
    dark_fraction: f64,
) -> Result<TomographyDataset> {
    let mean = expected_tomography_means(
        channel,
        inputs,
        settings,
        expected_counts_per_setting,
        dark_fraction,
    )?;
    let entries = mean
        .into_iter()
        .enumerate()
        .map(|(i, (input, setting, mu))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let counts = if mu > 0.0 {
                Poisson::new(mu)
                    .map(|d| d.sample(&mut rng) as u64)
                    .unwrap_or(0)
            } else {
                0
            };
            Entry {
                input,
                setting,
                flag,
                counts,
            }
        })
        .collect();
    Ok(TomographyDataset::new(entries))
}

/// Noise-free dataset: every count is its expectation value, rounded.
pub fn expected_tomography(
    channel: &ProcessMatrix,
    inputs: &[Basis],
    settings: &[Basis],
    flag: FlagTag,
    expected_counts_per_setting: f64,
    dark_fraction: f64,
) -> Result<TomographyDataset> {
    let mean = expected_tomography_means(
        channel,
        inputs,
        settings,
        expected_counts_per_setting,
        dark_fraction,
    )?;
    Ok(TomographyDataset::new(
        mean.into_iter()
            .map(|(input, setting, mu)| Entry {
                input,
                setting,
                flag,
                counts: mu.round() as u64,
            })
            .collect(),
    ))
}

/// `(input, setting, mean count)` in input-major order.
pub fn expected_tomography_means(
    channel: &ProcessMatrix,
    inputs: &[Basis],
    settings: &[Basis],
    expected_counts_per_setting: f64,
    dark_fraction: f64,
) -> Result<Vec<(Basis, Basis, f64)>> {
    check_simulation_args(expected_counts_per_setting, dark_fraction)?;
    let mut out = Vec::with_capacity(inputs.len() * settings.len());
    for &input in inputs {
        for &setting in settings {
            let p = expected_probability(channel, input, setting, dark_fraction)?;
            out.push((input, setting, expected_counts_per_setting * p));
        }
    }
    Ok(out)
}
