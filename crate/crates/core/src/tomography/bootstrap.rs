//! Parametric bootstrap: every count is redrawn from a Poisson distribution
//! with the observed count as its mean and the reconstruction is repeated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use super::mle::{mle_process_reconstruct, mle_state_reconstruct, MleOptions};
use super::TomographyDataset;
use crate::error::{Error, Result};
use crate::{process_fidelity, state_fidelity, Basis, ProcessMatrix, QubitState};

pub const MIN_RESAMPLES: usize = 100;
/// Largest tolerated fraction of failed resamples.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

/// Quantity evaluated on every reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub enum Statistic {
    ProcessFidelity {
        target: ProcessMatrix,
        constrain_tp: bool,
    },
    StateFidelity {
        input: Basis,
        target: QubitState,
    },
}

impl Statistic {
    pub fn evaluate(&self, data: &TomographyDataset, opts: &MleOptions) -> Result<f64> {
        match self {
            Statistic::ProcessFidelity {
                target,
                constrain_tp,
            } => {
                let chi = mle_process_reconstruct(data, *constrain_tp, opts)?;
                Ok(process_fidelity(&chi, target))
            }
            Statistic::StateFidelity { input, target } => {
                let rho = mle_state_reconstruct(data, *input, opts)?;
                Ok(state_fidelity(&rho, target))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapSummary {
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub failed: usize,
    pub total: usize,
}

fn resample(data: &TomographyDataset, seed: u64, index: u64) -> TomographyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    data.map_counts(|_, n| {
        if n == 0 {
            0
        } else {
            Poisson::new(n as f64)
                .map(|d| d.sample(&mut rng) as u64)
                .unwrap_or(0)
        }
    })
}

/// Mean and standard deviation of `statistic` over `n_resamples` Poisson
/// resamples. Resample `i` uses random stream `i` of `seed`, so the result
/// does not depend on the thread count.
pub fn bootstrap_uncertainty(
    data: &TomographyDataset,
    n_resamples: usize,
    seed: u64,
    statistic: &Statistic,
    opts: &MleOptions,
) -> Result<BootstrapSummary> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::invalid(
            "n_resamples",
            format!("need at least {MIN_RESAMPLES}"),
        ));
    }
    let values: Vec<Result<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| statistic.evaluate(&resample(data, seed, i as u64), opts))
        .collect();
    let ok: Vec<f64> = values
        .iter()
        .filter_map(|v| v.as_ref().ok().copied())
        .collect();
    let failed = n_resamples - ok.len();
    if failed as f64 > MAX_FAILURE_FRACTION * n_resamples as f64 || ok.len() < 2 {
        return Err(Error::Bootstrap {
            failed,
            total: n_resamples,
        });
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BootstrapSummary {
        mean,
        std: var.sqrt(),
        failed,
        total: n_resamples,
    })
}
