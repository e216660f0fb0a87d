//! Density matrices, Pauli-basis process matrices and fidelities.
//!
//! Two-qubit operators use the mode order flag ⊗ signal, i.e. basis index
//! `2·flag + signal` with `0 = H`, `1 = V`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::linalg::{kron, partial_trace_first, Mat2, Mat4, Matrix, C};
use crate::scalar::Real;

/// Polarization basis kets used for preparation and analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Basis {
    pub const ALL: [Basis; 6] = [Basis::H, Basis::V, Basis::D, Basis::A, Basis::R, Basis::L];

    /// `D = (H+V)/√2`, `A = (H−V)/√2`, `R = (H+iV)/√2`, `L = (H−iV)/√2`.
    pub fn ket<T: Real>(self) -> [C<T>; 2] {
        let o = C::<T>::one();
        let z = C::<T>::zero();
        let h = C::new(T::FRAC_1_SQRT_2(), T::zero());
        let ih = C::new(T::zero(), T::FRAC_1_SQRT_2());
        match self {
            Basis::H => [o, z],
            Basis::V => [z, o],
            Basis::D => [h, h],
            Basis::A => [h, -h],
            Basis::R => [h, ih],
            Basis::L => [h, -ih],
        }
    }

    pub fn projector<T: Real>(self) -> Mat2<T> {
        Mat2::outer(&self.ket())
    }

    /// The orthogonal ket of the same analysis basis.
    pub fn partner(self) -> Basis {
        match self {
            Basis::H => Basis::V,
            Basis::V => Basis::H,
            Basis::D => Basis::A,
            Basis::A => Basis::D,
            Basis::R => Basis::L,
            Basis::L => Basis::R,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::H => "H",
            Basis::V => "V",
            Basis::D => "D",
            Basis::A => "A",
            Basis::R => "R",
            Basis::L => "L",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "H" => Basis::H,
            "V" => Basis::V,
            "D" => Basis::D,
            "A" => Basis::A,
            "R" => Basis::R,
            "L" => Basis::L,
            other => return Err(Error::invalid("basis", format!("unknown label `{other}`"))),
        })
    }
}

/// Pauli operators `[I, X, Y, Z]`.
pub fn paulis<T: Real>() -> [Mat2<T>; 4] {
    let o = C::<T>::one();
    let z = C::<T>::zero();
    let i = C::<T>::i();
    [
        Mat2::from_rows([[o, z], [z, o]]),
        Mat2::from_rows([[z, o], [o, z]]),
        Mat2::from_rows([[z, -i], [i, z]]),
        Mat2::from_rows([[o, z], [z, -o]]),
    ]
}

/// Rotation `exp(−iθY/2)`.
pub fn rotation_y<T: Real>(theta: T) -> Mat2<T> {
    let half = theta / T::lit(2.0);
    let (s, c) = half.sin_cos();
    Mat2::from_rows([
        [C::new(c, T::zero()), C::new(-s, T::zero())],
        [C::new(s, T::zero()), C::new(c, T::zero())],
    ])
}

/// Phase gate `diag(1, e^{iφ})`.
pub fn phase_gate<T: Real>(phi: T) -> Mat2<T> {
    Mat2::from_rows([
        [C::one(), C::zero()],
        [C::zero(), Complex::from_polar(T::one(), phi)],
    ])
}

fn validate_density<T: Real, const N: usize>(m: &Matrix<T, N>) -> Result<()> {
    let herm = m.hermiticity_error();
    if herm > T::algebra_tol() {
        return Err(Error::domain(format!("not Hermitian (deviation {herm:e})")));
    }
    let tr = m.trace();
    if (tr.re - T::one()).abs() > T::algebra_tol() || tr.im.abs() > T::algebra_tol() {
        return Err(Error::domain(format!("trace {} ≠ 1", tr)));
    }
    let lmin = m.min_eigenvalue_h();
    if lmin < -T::psd_tol() {
        return Err(Error::domain(format!(
            "not positive semidefinite (λ_min = {lmin:e})"
        )));
    }
    Ok(())
}

/// Hermitian part rescaled to unit trace.
fn normalize<T: Real, const N: usize>(m: &Matrix<T, N>) -> Result<Matrix<T, N>> {
    let h = m.hermitian_part();
    let tr = h.trace().re;
    if tr <= T::min_positive_value() {
        return Err(Error::UndefinedConditional {
            probability: tr.to_f64().unwrap_or(0.0),
        });
    }
    Ok(h.scale(T::one() / tr))
}

/// Density operator of a polarization qubit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Qubit<T> {
    rho: Mat2<T>,
}

impl<T: Real> Qubit<T> {
    pub fn new(rho: Mat2<T>) -> Result<Self> {
        validate_density(&rho)?;
        Ok(Self { rho })
    }

    pub(crate) fn from_unnormalized(m: &Mat2<T>) -> Result<Self> {
        Ok(Self { rho: normalize(m)? })
    }

    pub fn from_label(b: Basis) -> Self {
        Self { rho: b.projector() }
    }

    /// Pure state `α|H⟩ + β|V⟩`.
    pub fn from_amplitudes(alpha: C<T>, beta: C<T>) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - T::one()).abs() > T::norm_tol() {
            return Err(Error::Normalization {
                norm: norm.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            rho: Mat2::outer(&[alpha, beta]),
        })
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Mat2::identity().scale(T::lit(0.5)),
        }
    }

    pub fn matrix(&self) -> &Mat2<T> {
        &self.rho
    }

    /// `U ρ U†`.
    pub fn evolve(&self, u: &Mat2<T>) -> Self {
        Self {
            rho: (*u * self.rho * u.adjoint()).hermitian_part(),
        }
    }

    /// `Tr(P ρ)` for an analysis projector.
    pub fn probability(&self, b: Basis) -> T {
        b.projector().trace_product(&self.rho).re
    }
}

/// Two-qubit density operator in flag ⊗ signal order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubit<T> {
    rho: Mat4<T>,
}

impl<T: Real> TwoQubit<T> {
    pub fn new(rho: Mat4<T>) -> Result<Self> {
        validate_density(&rho)?;
        Ok(Self { rho })
    }

    pub(crate) fn from_unnormalized(m: &Mat4<T>) -> Result<Self> {
        Ok(Self { rho: normalize(m)? })
    }

    pub fn product(flag: &Qubit<T>, signal: &Qubit<T>) -> Self {
        Self {
            rho: kron(&flag.rho, &signal.rho),
        }
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.rho
    }

    pub fn flag_reduced(&self) -> Qubit<T> {
        Qubit {
            rho: crate::linalg::partial_trace_second(&self.rho),
        }
    }

    pub fn signal_reduced(&self) -> Qubit<T> {
        Qubit {
            rho: partial_trace_first(&self.rho),
        }
    }
}

/// Process (chi) matrix of a single-qubit channel in the basis `{I, X, Y, Z}`:
/// `E(ρ) = Σ χ_mn E_m ρ E_n†`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chi<T> {
    chi: Mat4<T>,
}

impl<T: Real> Chi<T> {
    /// Validates Hermiticity and positivity; the trace is left free so that
    /// heralded (non trace-preserving) processes can be represented.
    pub fn new(chi: Mat4<T>) -> Result<Self> {
        let herm = chi.hermiticity_error();
        if herm > T::algebra_tol() * T::lit(1e3) {
            return Err(Error::domain(format!(
                "chi not Hermitian (deviation {herm:e})"
            )));
        }
        let chi = chi.hermitian_part();
        let lmin = chi.min_eigenvalue_h();
        if lmin < -T::psd_tol() {
            return Err(Error::domain(format!("chi not PSD (λ_min = {lmin:e})")));
        }
        Ok(Self { chi })
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.chi
    }

    pub fn identity() -> Self {
        Self::unitary(&Mat2::identity())
    }

    /// Chi of a Pauli unitary, `index` in `0..4` for `I, X, Y, Z`.
    pub fn pauli(index: usize) -> Self {
        Self::unitary(&paulis()[index])
    }

    /// Chi of `ρ ↦ U ρ U†`: `χ_mn = c_m c_n*` with `c_m = Tr(E_m U)/2`.
    pub fn unitary(u: &Mat2<T>) -> Self {
        let p = paulis::<T>();
        let half = T::lit(0.5);
        let c: [C<T>; 4] = std::array::from_fn(|m| p[m].trace_product(u) * half);
        Self {
            chi: Mat4::outer(&c),
        }
    }

    /// Convex mixture `Σ w_k χ_k`.
    pub fn mixture(parts: &[(T, Chi<T>)]) -> Result<Self> {
        let mut acc = Mat4::zeros();
        for (w, c) in parts {
            if *w < T::zero() {
                return Err(Error::invalid("mixture weight", "negative weight"));
            }
            acc = acc + c.chi.scale(*w);
        }
        Self::new(acc)
    }

    /// Chi of an arbitrary linear map on 2×2 operators, via its Choi matrix.
    pub fn from_map(f: impl Fn(&Mat2<T>) -> Mat2<T>) -> Result<Self> {
        Self::from_choi(&choi_of_map(f))
    }

    /// Unnormalized Choi matrix `C = Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` (input ⊗ output).
    pub fn choi(&self) -> Mat4<T> {
        let vecs = pauli_vecs::<T>();
        let mut out = Mat4::zeros();
        for m in 0..4 {
            for n in 0..4 {
                let w = self.chi.m[m][n];
                if w == C::zero() {
                    continue;
                }
                out = out + Mat4::from_fn(|r, c| vecs[m][r] * vecs[n][c].conj() * w);
            }
        }
        out
    }

    /// Inverse of [`Chi::choi`]: `χ_mn = ⟨⟨E_m|C|E_n⟩⟩ / 4`.
    pub fn from_choi(choi: &Mat4<T>) -> Result<Self> {
        let vecs = pauli_vecs::<T>();
        let quarter = T::lit(0.25);
        let chi = Mat4::from_fn(|m, n| {
            let cv = choi.mul_vec(&vecs[n]);
            (0..4).fold(C::zero(), |acc, k| acc + vecs[m][k].conj() * cv[k]) * quarter
        });
        Self::new(chi)
    }

    pub fn trace(&self) -> T {
        self.chi.trace().re
    }

    /// Copy rescaled to `Tr χ = 1`.
    pub fn trace_normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= T::min_positive_value() {
            return Err(Error::domain("chi has zero trace"));
        }
        Ok(Self {
            chi: self.chi.scale(T::one() / tr),
        })
    }

    /// `max |Σ χ_mn E_n† E_m − I|`; zero for trace-preserving channels.
    pub fn tp_defect(&self) -> T {
        let p = paulis::<T>();
        let mut acc = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                acc = acc + (p[n].adjoint() * p[m]).scale_c(self.chi.m[m][n]);
            }
        }
        acc.max_abs_diff(&Mat2::identity())
    }

    /// `Σ χ_mn E_m X E_n†` on a raw operator.
    pub fn apply_raw(&self, x: &Mat2<T>) -> Mat2<T> {
        let p = paulis::<T>();
        let mut acc = Mat2::zeros();
        for m in 0..4 {
            let left = p[m] * *x;
            for (n, pn) in p.iter().enumerate() {
                let w = self.chi.m[m][n];
                if w == C::zero() {
                    continue;
                }
                acc = acc + (left * pn.adjoint()).scale_c(w);
            }
        }
        acc
    }
}

/// `|E_m⟩⟩` with component `2i + k = (E_m)_{ki}`.
fn pauli_vecs<T: Real>() -> [[C<T>; 4]; 4] {
    let p = paulis::<T>();
    std::array::from_fn(|m| std::array::from_fn(|r| p[m].m[r % 2][r / 2]))
}

pub(crate) fn choi_of_map<T: Real>(f: impl Fn(&Mat2<T>) -> Mat2<T>) -> Mat4<T> {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let e = Mat2::from_fn(|r, c| {
                if r == i && c == j {
                    C::one()
                } else {
                    C::zero()
                }
            });
            let img = f(&e);
            for k in 0..2 {
                for l in 0..2 {
                    out.m[2 * i + k][2 * j + l] = img.m[k][l];
                }
            }
        }
    }
    out
}

/// Preparation request for [`make_state`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StatePrep<T> {
    Label(Basis),
    Amplitudes(C<T>, C<T>),
}

pub fn make_state<T: Real>(prep: StatePrep<T>) -> Result<Qubit<T>> {
    match prep {
        StatePrep::Label(b) => Ok(Qubit::from_label(b)),
        StatePrep::Amplitudes(a, b) => Qubit::from_amplitudes(a, b),
    }
}

/// Jozsa fidelity `(Tr √(√ρ σ √ρ))²` between two density operators of any
/// size supported by [`Matrix`].
pub fn jozsa_fidelity<T: Real, const N: usize>(
    rho: &Matrix<T, N>,
    sigma: &Matrix<T, N>,
) -> Result<T> {
    for (name, m) in [("first", rho), ("second", sigma)] {
        let lmin = m.min_eigenvalue_h();
        if lmin < -T::psd_tol() {
            return Err(Error::domain(format!(
                "{name} argument not PSD (λ_min = {lmin:e})"
            )));
        }
    }
    let s = rho.sqrt_psd();
    let inner = (s * *sigma * s).hermitian_part();
    let floor = inner.spectral_floor();
    let root_trace = inner
        .eigenvalues_h()
        .iter()
        .filter(|&&l| l > floor)
        .fold(T::zero(), |acc, &l| acc + l.sqrt());
    Ok((root_trace * root_trace).min(T::one()).max(T::zero()))
}

pub fn state_fidelity<T: Real>(rho: &Qubit<T>, sigma: &Qubit<T>) -> T {
    jozsa_fidelity(&rho.rho, &sigma.rho).expect("validated density matrices")
}

/// Applies a trace-preserving chi to a state. Output is renormalized to unit
/// trace, absorbing any residual trace defect within tolerance.
pub fn apply_channel<T: Real>(chi: &Chi<T>, rho: &Qubit<T>) -> Result<Qubit<T>> {
    let tr = chi.trace();
    if (tr - T::one()).abs() > T::tp_tol() {
        return Err(Error::NotTracePreserving {
            trace: tr.to_f64().unwrap_or(f64::NAN),
        });
    }
    Qubit::from_unnormalized(&chi.apply_raw(&rho.rho))
}

/// Jozsa fidelity between the trace-normalized Choi states of two processes.
pub fn process_fidelity<T: Real>(chi: &Chi<T>, target: &Chi<T>) -> T {
    let a = chi.choi();
    let b = target.choi();
    let a = a.scale(T::one() / a.trace().re);
    let b = b.scale(T::one() / b.trace().re);
    jozsa_fidelity(&a, &b).expect("chi validated PSD")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(b: Basis) -> Qubit<f64> {
        Qubit::from_label(b)
    }

    #[test]
    fn labelled_states() {
        let h = make_state::<f64>(StatePrep::Label(Basis::H)).unwrap();
        assert_eq!(h.matrix().get(0, 0), C::new(1.0, 0.0));
        assert_eq!(h.matrix().get(1, 1), C::new(0.0, 0.0));
        let d = st(Basis::D);
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.matrix().get(i, j) - C::new(0.5, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn amplitude_states() {
        let q = make_state(StatePrep::Amplitudes(
            C::new(0.3f64.sqrt(), 0.0),
            C::new(0.7f64.sqrt(), 0.0),
        ))
        .unwrap();
        assert!((q.matrix().get(0, 0).re - 0.3).abs() < 1e-15);
        assert!((q.matrix().get(1, 1).re - 0.7).abs() < 1e-15);
        assert!((q.matrix().get(0, 1).re - 0.21f64.sqrt()).abs() < 1e-15);
        let err =
            make_state(StatePrep::Amplitudes(C::new(1.0, 0.0), C::new(0.5, 0.0))).unwrap_err();
        assert!(matches!(err, Error::Normalization { .. }));
    }

    #[test]
    fn invalid_density_rejected() {
        let m = Mat2::diag([1.5, -0.5]);
        assert!(matches!(Qubit::new(m), Err(Error::Domain { .. })));
        assert!(matches!(
            jozsa_fidelity(&m, &Mat2::identity()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn fidelity_examples() {
        let h = st(Basis::H);
        assert!((state_fidelity(&h, &h) - 1.0).abs() < 1e-12);
        assert!(state_fidelity(&h, &st(Basis::V)).abs() < 1e-12);
        assert!((state_fidelity(&h, &st(Basis::D)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn channel_examples() {
        let d = st(Basis::D);
        let out = apply_channel(&Chi::identity(), &d).unwrap();
        assert!(out.matrix().max_abs_diff(d.matrix()) < 1e-12);

        let out = apply_channel(&Chi::pauli(3), &d).unwrap();
        assert!(out.matrix().max_abs_diff(st(Basis::A).matrix()) < 1e-12);

        let mix = Chi::mixture(&[(0.5, Chi::identity()), (0.5, Chi::pauli(3))]).unwrap();
        let out = apply_channel(&mix, &d).unwrap();
        assert!(out.matrix().max_abs_diff(&Mat2::diag([0.5, 0.5])) < 1e-12);

        let half = Chi::new(Chi::<f64>::identity().matrix().scale(0.5)).unwrap();
        assert!(matches!(
            apply_channel(&half, &d),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn process_fidelity_examples() {
        let i = Chi::<f64>::identity();
        let z = Chi::pauli(3);
        let mix = Chi::mixture(&[(0.5, i), (0.5, z)]).unwrap();
        assert!((process_fidelity(&i, &i) - 1.0).abs() < 1e-12);
        assert!(process_fidelity(&z, &i).abs() < 1e-12);
        assert!((process_fidelity(&mix, &i) - 0.5).abs() < 1e-12);
        assert!((process_fidelity(&mix, &mix) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn choi_round_trip_and_map() {
        let u = rotation_y(0.4) * phase_gate(1.1);
        let chi = Chi::<f64>::unitary(&u);
        let back = Chi::from_choi(&chi.choi()).unwrap();
        assert!(back.matrix().max_abs_diff(chi.matrix()) < 1e-14);
        let via_map = Chi::from_map(|x| u * *x * u.adjoint()).unwrap();
        assert!(via_map.matrix().max_abs_diff(chi.matrix()) < 1e-14);
        assert!(chi.tp_defect() < 1e-14);
        assert!((chi.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unitary_process_fidelity_is_chi_overlap() {
        let u = rotation_y(0.3);
        let chi = Chi::mixture(&[(0.7, Chi::<f64>::unitary(&u)), (0.3, Chi::pauli(1))]).unwrap();
        let i = Chi::identity();
        let overlap = chi.matrix().trace_product(i.matrix()).re;
        let f = process_fidelity(&chi, &i);
        assert!((f - overlap).abs() < 1e-12, "{f} vs {overlap}");
    }

    #[test]
    fn single_precision_channel() {
        let d = Qubit::<f32>::from_label(Basis::D);
        let out = apply_channel(&Chi::pauli(3), &d).unwrap();
        let a = Qubit::<f32>::from_label(Basis::A);
        assert!(state_fidelity(&out, &a) > 0.9999);
    }
}
