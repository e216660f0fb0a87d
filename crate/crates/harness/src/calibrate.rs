//! Least-squares fit of the receiver noise parameters to process fidelities
//! of the noise-free (infinite statistics) effective channels.

use std::fmt;
use std::str::FromStr;

use precert_core::protocol::{dephasing_target, effective_channel, HeraldMode, NoiseParams};
use precert_core::{process_fidelity, ProcessMatrix};

use crate::error::{HarnessError, Result};

/// Largest tolerated deviation between a fitted and a target fidelity.
pub const RESIDUAL_TOLERANCE: f64 = 0.02;

/// Process the fidelity is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Identity,
    PauliZ,
    /// `(I + Z)/2`.
    Dephasing,
}

impl Reference {
    pub fn process(self) -> ProcessMatrix {
        match self {
            Reference::Identity => ProcessMatrix::identity(),
            Reference::PauliZ => ProcessMatrix::pauli(3),
            Reference::Dephasing => dephasing_target(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Reference::Identity => "I",
            Reference::PauliZ => "Z",
            Reference::Dephasing => "(I+Z)/2",
        }
    }

    /// The process each herald mode ideally implements.
    pub fn natural(mode: HeraldMode) -> Self {
        match mode {
            HeraldMode::DOnly | HeraldMode::PooledFeedforward => Reference::Identity,
            HeraldMode::AOnly => Reference::PauliZ,
            HeraldMode::Pooled => Reference::Dephasing,
        }
    }
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reference {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" => Ok(Reference::Identity),
            "Z" => Ok(Reference::PauliZ),
            "(I+Z)/2" => Ok(Reference::Dephasing),
            _ => Err(HarnessError::validation(
                "reference",
                format!("unknown reference `{s}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FidelityTarget {
    pub mode: HeraldMode,
    pub reference: Reference,
    pub value: f64,
}

/// Measured process fidelities of the four herald modes.
pub const MEASURED_TARGETS: [FidelityTarget; 4] = [
    FidelityTarget {
        mode: HeraldMode::DOnly,
        reference: Reference::Identity,
        value: 0.923,
    },
    FidelityTarget {
        mode: HeraldMode::AOnly,
        reference: Reference::PauliZ,
        value: 0.932,
    },
    FidelityTarget {
        mode: HeraldMode::PooledFeedforward,
        reference: Reference::Identity,
        value: 0.847,
    },
    FidelityTarget {
        mode: HeraldMode::Pooled,
        reference: Reference::Dephasing,
        value: 0.954,
    },
];

/// Result of [`calibrate_noise`] applied to [`MEASURED_TARGETS`], rounded.
pub const CALIBRATED_NOISE: NoiseParams<f64> = NoiseParams {
    interferometer_dephasing: 0.027778,
    pockels_phase_error: 0.872884,
    residual_rotation: 0.432311,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub noise: NoiseParams<f64>,
    /// Model fidelity for each target, in target order.
    pub fitted: Vec<f64>,
    /// Largest absolute deviation from a target.
    pub residual: f64,
    pub iterations: usize,
}

pub fn model_fidelities(noise: &NoiseParams<f64>, targets: &[FidelityTarget]) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|t| {
            Ok(process_fidelity(
                &effective_channel(noise, t.mode)?,
                &t.reference.process(),
            ))
        })
        .collect()
}

fn wrap(angle: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    angle - two_pi * (angle / two_pi).round()
}

/// Unconstrained coordinates `(u, ε, θ)` with dephasing `sin²u`.
fn decode(x: &[f64; 3]) -> NoiseParams<f64> {
    NoiseParams {
        interferometer_dephasing: x[0].sin().powi(2),
        pockels_phase_error: wrap(x[1]),
        residual_rotation: wrap(x[2]),
    }
}

const START: [f64; 3] = [0.2, 0.3, 0.1];
const MAX_ITERATIONS: usize = 5000;

/// Fits [`NoiseParams`] to `targets` by Nelder–Mead from a fixed start.
/// Fails with [`HarnessError::Calibration`] when the best fit misses some
/// target by more than [`RESIDUAL_TOLERANCE`]. Angles are reported as
/// magnitudes since every fidelity is even in them.
pub fn calibrate_noise(targets: &[FidelityTarget]) -> Result<Calibration> {
    if targets.is_empty() {
        return Err(HarnessError::validation(
            "targets",
            "at least one target is required",
        ));
    }
    for t in targets {
        if !(t.value > 0.0 && t.value <= 1.0) {
            return Err(HarnessError::validation(
                "targets",
                format!("{} must lie in (0, 1]", t.value),
            ));
        }
    }
    let cost = |x: &[f64; 3]| -> f64 {
        match model_fidelities(&decode(x), targets) {
            Ok(f) => f
                .iter()
                .zip(targets)
                .map(|(m, t)| (m - t.value).powi(2))
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let (best, iterations) = nelder_mead(cost, START, 0.1, MAX_ITERATIONS);
    let mut noise = decode(&best);
    noise.pockels_phase_error = noise.pockels_phase_error.abs();
    noise.residual_rotation = noise.residual_rotation.abs();
    let fitted = model_fidelities(&noise, targets)?;
    let residual = fitted
        .iter()
        .zip(targets)
        .map(|(m, t)| (m - t.value).abs())
        .fold(0.0, f64::max);
    if residual > RESIDUAL_TOLERANCE {
        return Err(HarnessError::Calibration {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    Ok(Calibration {
        noise,
        fitted,
        residual,
        iterations,
    })
}

/// Minimizes `f` with the standard reflection/expansion/contraction/shrink
/// coefficients (1, 2, ½, ½). Returns the best vertex and the iteration
/// count.
fn nelder_mead<const D: usize>(
    f: impl Fn(&[f64; D]) -> f64,
    start: [f64; D],
    scale: f64,
    max_iter: usize,
) -> ([f64; D], usize) {
    let mut simplex: Vec<([f64; D], f64)> = (0..=D)
        .map(|k| {
            let mut x = start;
            if k > 0 {
                x[k - 1] += scale;
            }
            (x, f(&x))
        })
        .collect();
    let along = |a: &[f64; D], b: &[f64; D], t: f64| -> [f64; D] {
        std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
    };
    for iter in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[D].1);
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= 1e-16 * (1.0 + best.abs()) && size < 1e-10 {
            return (simplex[0].0, iter);
        }
        let centroid: [f64; D] =
            std::array::from_fn(|i| simplex[..D].iter().map(|(x, _)| x[i]).sum::<f64>() / D as f64);
        let xw = simplex[D].0;
        let reflected = along(&centroid, &xw, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(&centroid, &xw, -2.0);
            let fe = f(&expanded);
            simplex[D] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[D - 1].1 {
            simplex[D] = (reflected, fr);
            continue;
        }
        let contracted = if fr < worst {
            along(&centroid, &reflected, 0.5)
        } else {
            along(&centroid, &xw, 0.5)
        };
        let fc = f(&contracted);
        if fc < worst.min(fr) {
            simplex[D] = (contracted, fc);
            continue;
        }
        let x0 = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            v.0 = along(&x0, &v.0, 0.5);
            v.1 = f(&v.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, max_iter)
}
