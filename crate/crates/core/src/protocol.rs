//! The precertification channel: down-conversion splitting, flag
//! projection in the diagonal basis and feedforward phase correction.
//!
//! States produced here are conditioned on a successful split; the splitting
//! probability itself belongs to the counting model in [`crate::detection`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{kron, partial_trace_first, Mat2, Mat4};
use crate::quantum::{paulis, phase_gate, rotation_y, Basis, Chi, Qubit, TwoQubit};
use crate::scalar::Real;

/// Imperfections of the receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams<T> {
    /// Probability of a Z error between the H and V down-conversion arms.
    pub interferometer_dephasing: T,
    /// Deviation (rad) from the ideal π phase applied after an A flag.
    pub pockels_phase_error: T,
    /// Polarization misalignment of the signal (rad, rotation about Y).
    pub residual_rotation: T,
}

impl<T: Real> Default for NoiseParams<T> {
    fn default() -> Self {
        Self::ideal()
    }
}

impl<T: Real> NoiseParams<T> {
    pub fn ideal() -> Self {
        Self {
            interferometer_dephasing: T::zero(),
            pockels_phase_error: T::zero(),
            residual_rotation: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.interferometer_dephasing;
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::invalid(
                "interferometer_dephasing",
                "must lie in [0, 1]",
            ));
        }
        for (name, v) in [
            ("pockels_phase_error", self.pockels_phase_error),
            ("residual_rotation", self.residual_rotation),
        ] {
            if v.is_nan() || v.abs() > T::PI() {
                return Err(Error::invalid(name, "magnitude must not exceed π"));
            }
        }
        Ok(())
    }
}

/// Result of the diagonal-basis flag measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlagOutcome {
    D,
    A,
}

impl FlagOutcome {
    pub const BOTH: [FlagOutcome; 2] = [FlagOutcome::D, FlagOutcome::A];

    pub fn basis(self) -> Basis {
        match self {
            FlagOutcome::D => Basis::D,
            FlagOutcome::A => Basis::A,
        }
    }
}

impl fmt::Display for FlagOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagOutcome::D => "D",
            FlagOutcome::A => "A",
        })
    }
}

/// Which flag detections are kept, and whether feedforward is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeraldMode {
    DOnly,
    AOnly,
    Pooled,
    PooledFeedforward,
}

impl HeraldMode {
    pub const ALL: [HeraldMode; 4] = [
        HeraldMode::DOnly,
        HeraldMode::AOnly,
        HeraldMode::Pooled,
        HeraldMode::PooledFeedforward,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeraldMode::DOnly => "herald-D-only",
            HeraldMode::AOnly => "herald-A-only",
            HeraldMode::Pooled => "pooled-no-feedforward",
            HeraldMode::PooledFeedforward => "pooled-with-feedforward",
        }
    }

    /// Flag-conditioned processes need not be trace preserving.
    pub fn is_trace_preserving(self) -> bool {
        matches!(self, HeraldMode::PooledFeedforward)
    }
}

impl fmt::Display for HeraldMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeraldMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        HeraldMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid("mode", format!("unknown herald mode `{s}`")))
    }
}

/// `|H⟩ ↦ |H⟩_f|H⟩_s`, `|V⟩ ↦ |V⟩_f|V⟩_s` on a raw operator.
fn split_raw<T: Real>(x: &Mat2<T>) -> Mat4<T> {
    let mut out = Mat4::zeros();
    let idx = [0usize, 3];
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            out.m[a][b] = x.m[i][j];
        }
    }
    out
}

/// Unnormalized signal operator after projecting the flag onto `outcome`.
fn flag_branch_raw<T: Real>(x: &Mat4<T>, outcome: FlagOutcome) -> Mat2<T> {
    let p = kron(&outcome.basis().projector(), &Mat2::identity());
    partial_trace_first(&(p * *x * p))
}

fn dephase_raw<T: Real>(x: &Mat2<T>, p: T) -> Mat2<T> {
    if p.is_zero() {
        return *x;
    }
    let z = paulis::<T>()[3];
    x.scale(T::one() - p) + (z * *x * z).scale(p)
}

/// Unitary applied to the signal for a given flag outcome.
fn correction_unitary<T: Real>(
    outcome: FlagOutcome,
    noise: &NoiseParams<T>,
    feedforward: bool,
) -> Mat2<T> {
    let rot = rotation_y(noise.residual_rotation);
    match (outcome, feedforward) {
        (FlagOutcome::A, true) => rot * phase_gate(T::PI() + noise.pockels_phase_error),
        _ => rot,
    }
}

/// Splits the input photon into a flag/signal pair; output is conditioned
/// on a successful conversion (unit trace).
pub fn pdc_split<T: Real>(input: &Qubit<T>) -> TwoQubit<T> {
    TwoQubit::from_unnormalized(&split_raw(input.matrix())).expect("unit-trace input")
}

/// Projects the flag onto `|D⟩` or `|A⟩`; returns the outcome probability and
/// the normalized conditional signal state.
pub fn flag_measure<T: Real>(state: &TwoQubit<T>, outcome: FlagOutcome) -> Result<(T, Qubit<T>)> {
    let branch = flag_branch_raw(state.matrix(), outcome);
    let prob = branch.trace().re;
    if prob < T::lit(1e-15) {
        return Err(Error::UndefinedConditional {
            probability: prob.to_f64().unwrap_or(0.0),
        });
    }
    Ok((prob, Qubit::from_unnormalized(&branch)?))
}

/// Feedforward on the signal: the π phase after an A flag (with the Pockels
/// error) followed by the residual misalignment, for either outcome.
pub fn feedforward_correct<T: Real>(
    signal: &Qubit<T>,
    outcome: FlagOutcome,
    noise: &NoiseParams<T>,
) -> Qubit<T> {
    signal.evolve(&correction_unitary(outcome, noise, true))
}

/// Input → heralded signal map for `mode`, on raw operators, unnormalized.
fn heralded_map<T: Real>(x: &Mat2<T>, noise: &NoiseParams<T>, mode: HeraldMode) -> Mat2<T> {
    let split = split_raw(&dephase_raw(x, noise.interferometer_dephasing));
    let (outcomes, feedforward): (&[FlagOutcome], bool) = match mode {
        HeraldMode::DOnly => (&[FlagOutcome::D], false),
        HeraldMode::AOnly => (&[FlagOutcome::A], false),
        HeraldMode::Pooled => (&FlagOutcome::BOTH, false),
        HeraldMode::PooledFeedforward => (&FlagOutcome::BOTH, true),
    };
    outcomes.iter().fold(Mat2::zeros(), |acc, &o| {
        let u = correction_unitary(o, noise, feedforward);
        acc + u * flag_branch_raw(&split, o) * u.adjoint()
    })
}

/// Single-qubit process from the input polarization to the heralded signal,
/// normalized to `Tr χ = 1`.
pub fn effective_channel<T: Real>(noise: &NoiseParams<T>, mode: HeraldMode) -> Result<Chi<T>> {
    noise.validate()?;
    Chi::from_map(|x| heralded_map(x, noise, mode))?.trace_normalized()
}

/// Probability of a flag outcome for a given input (½ for every input).
pub fn flag_probability<T: Real>(input: &Qubit<T>, outcome: FlagOutcome) -> T {
    flag_branch_raw(&split_raw(input.matrix()), outcome)
        .trace()
        .re
}

/// `(I + Z)/2` mixture: the pooled process without feedforward.
pub fn dephasing_target<T: Real>() -> Chi<T> {
    let half = T::lit(0.5);
    Chi::new(Mat4::diag([half, T::zero(), T::zero(), half])).expect("valid chi")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C;
    use crate::quantum::{process_fidelity, state_fidelity};

    type Q = Qubit<f64>;

    #[test]
    fn split_examples() {
        let out = pdc_split(&Q::from_label(Basis::H));
        assert!(out.matrix().max_abs_diff(&Mat4::diag([1.0, 0.0, 0.0, 0.0])) < 1e-15);

        let out = pdc_split(&Q::from_label(Basis::D));
        let bell = Mat4::from_fn(|i, j| {
            if (i == 0 || i == 3) && (j == 0 || j == 3) {
                C::new(0.5, 0.0)
            } else {
                C::new(0.0, 0.0)
            }
        });
        assert!(out.matrix().max_abs_diff(&bell) < 1e-15);

        let out = pdc_split(&Q::maximally_mixed());
        assert!(out.matrix().max_abs_diff(&Mat4::diag([0.5, 0.0, 0.0, 0.5])) < 1e-15);
    }

    #[test]
    fn flag_examples() {
        let (p, s) = flag_measure(&pdc_split(&Q::from_label(Basis::H)), FlagOutcome::D).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(state_fidelity(&s, &Q::from_label(Basis::H)) > 1.0 - 1e-12);

        let split_d = pdc_split(&Q::from_label(Basis::D));
        let (p, s) = flag_measure(&split_d, FlagOutcome::A).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(state_fidelity(&s, &Q::from_label(Basis::A)) > 1.0 - 1e-12);
        let (p, s) = flag_measure(&split_d, FlagOutcome::D).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!(state_fidelity(&s, &Q::from_label(Basis::D)) > 1.0 - 1e-12);
    }

    #[test]
    fn flag_on_impossible_outcome() {
        let flag = Q::from_label(Basis::D);
        let st = TwoQubit::product(&flag, &Q::from_label(Basis::H));
        assert!(matches!(
            flag_measure(&st, FlagOutcome::A),
            Err(Error::UndefinedConditional { .. })
        ));
    }

    #[test]
    fn feedforward_examples() {
        let zero = NoiseParams::ideal();
        let a = Q::from_label(Basis::A);
        let out = feedforward_correct(&a, FlagOutcome::A, &zero);
        assert!(state_fidelity(&out, &Q::from_label(Basis::D)) > 1.0 - 1e-12);

        let h = Q::from_label(Basis::H);
        let out = feedforward_correct(&h, FlagOutcome::A, &zero);
        assert!(state_fidelity(&out, &h) > 1.0 - 1e-12);
    }

    #[test]
    fn feedforward_phase_error_matches_direct_evaluation() {
        // Oracle: diag(1, e^{i(π+ε)}) applied by hand to |A⟩ = (1, −1)/√2.
        for &eps in &[0.0, 0.05, 0.3, 1.0, 2.5] {
            let noise = NoiseParams {
                pockels_phase_error: eps,
                ..NoiseParams::ideal()
            };
            let out = feedforward_correct(&Q::from_label(Basis::A), FlagOutcome::A, &noise);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let phase = C::from_polar(1.0, std::f64::consts::PI + eps);
            let psi = [C::new(r, 0.0), C::new(-r, 0.0) * phase];
            let overlap = (psi[0] + psi[1]) * r;
            let oracle = overlap.norm_sqr();
            let f = state_fidelity(&out, &Q::from_label(Basis::D));
            assert!((f - oracle).abs() < 1e-12);
            assert!((f - (eps / 2.0).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_effective_channels() {
        let zero = NoiseParams::<f64>::ideal();
        let i = Chi::identity();
        let z = Chi::pauli(3);
        let f = |mode, target: &Chi<f64>| {
            process_fidelity(&effective_channel(&zero, mode).unwrap(), target)
        };
        assert!((f(HeraldMode::DOnly, &i) - 1.0).abs() < 1e-9);
        assert!((f(HeraldMode::AOnly, &z) - 1.0).abs() < 1e-9);
        assert!(f(HeraldMode::AOnly, &i).abs() < 1e-9);
        assert!((f(HeraldMode::Pooled, &dephasing_target()) - 1.0).abs() < 1e-9);
        assert!((f(HeraldMode::PooledFeedforward, &i) - 1.0).abs() < 1e-9);
        for mode in HeraldMode::ALL {
            let chi = effective_channel(&zero, mode).unwrap();
            assert!((chi.trace() - 1.0).abs() < 1e-12);
            assert!(chi.tp_defect() < 1e-12);
        }
    }

    #[test]
    fn noise_validation() {
        let bad = NoiseParams {
            interferometer_dephasing: 1.5,
            ..NoiseParams::<f64>::ideal()
        };
        assert!(effective_channel(&bad, HeraldMode::DOnly).is_err());
        let bad = NoiseParams {
            pockels_phase_error: 4.0,
            ..NoiseParams::<f64>::ideal()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generic_over_f32() {
        let chi =
            effective_channel(&NoiseParams::<f32>::ideal(), HeraldMode::PooledFeedforward).unwrap();
        assert!(process_fidelity(&chi, &Chi::identity()) > 0.9999);
    }
}
