//! Small dense complex matrices (2×2 and 4×4) and Hermitian spectral tools.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

pub type C<T> = Complex<T>;

/// Square complex matrix of fixed dimension, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix<T, const N: usize> {
    pub(crate) m: [[C<T>; N]; N],
}

pub type Mat2<T> = Matrix<T, 2>;
pub type Mat4<T> = Matrix<T, 4>;

impl<T: Real, const N: usize> Matrix<T, N> {
    pub fn zeros() -> Self {
        Self {
            m: [[C::zero(); N]; N],
        }
    }

    pub fn identity() -> Self {
        Self::from_fn(|i, j| if i == j { C::one() } else { C::zero() })
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut m = [[C::zero(); N]; N];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        }
        Self { m }
    }

    pub fn from_rows(m: [[C<T>; N]; N]) -> Self {
        Self { m }
    }

    /// Real diagonal matrix.
    pub fn diag(d: [T; N]) -> Self {
        Self::from_fn(|i, j| {
            if i == j {
                C::new(d[i], T::zero())
            } else {
                C::zero()
            }
        })
    }

    /// `|v⟩⟨v|`.
    pub fn outer(v: &[C<T>; N]) -> Self {
        Self::from_fn(|i, j| v[i] * v[j].conj())
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.m[i][j]
    }

    pub fn rows(&self) -> &[[C<T>; N]; N] {
        &self.m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(|i, j| self.m[j][i].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(|i, j| self.m[j][i])
    }

    pub fn trace(&self) -> C<T> {
        (0..N).fold(C::zero(), |acc, i| acc + self.m[i][i])
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_fn(|i, j| self.m[i][j] * s)
    }

    pub fn scale_c(&self, s: C<T>) -> Self {
        Self::from_fn(|i, j| self.m[i][j] * s)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut d = T::zero();
        for i in 0..N {
            for j in 0..N {
                d = d.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        d
    }

    pub fn max_abs(&self) -> T {
        self.max_abs_diff(&Self::zeros())
    }

    pub fn hermiticity_error(&self) -> T {
        self.max_abs_diff(&self.adjoint())
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        (*self + self.adjoint()).scale(T::lit(0.5))
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C<T> {
        let mut acc = C::zero();
        for i in 0..N {
            for k in 0..N {
                acc = acc + self.m[i][k] * other.m[k][i];
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[C<T>; N]) -> [C<T>; N] {
        let mut out = [C::zero(); N];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..N).fold(C::zero(), |acc, k| acc + self.m[i][k] * v[k]);
        }
        out
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
    /// rotations. Eigenvalues ascend; column `k` of the returned matrix is the
    /// eigenvector of eigenvalue `k`. Only the Hermitian part is used.
    pub fn eigh(&self) -> ([T; N], Self) {
        let mut a = self.hermitian_part();
        let mut v = Self::identity();
        let scale = a.max_abs().max(T::min_positive_value());
        let eps = T::epsilon() * scale;
        for _sweep in 0..64 {
            let mut off = T::zero();
            for p in 0..N {
                for q in (p + 1)..N {
                    off = off.max(a.m[p][q].norm());
                }
            }
            if off <= eps {
                break;
            }
            for p in 0..N {
                for q in (p + 1)..N {
                    let g = a.m[p][q];
                    let gabs = g.norm();
                    if gabs <= T::min_positive_value() {
                        continue;
                    }
                    let phase = g / gabs;
                    let app = a.m[p][p].re;
                    let aqq = a.m[q][q].re;
                    let tau = (aqq - app) / (T::lit(2.0) * gabs);
                    let t = if tau >= T::zero() {
                        T::one() / (tau + (T::one() + tau * tau).sqrt())
                    } else {
                        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                    };
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = t * c;
                    // U = diag(1, conj(phase)) · [[c, s], [-s, c]] on the (p, q) plane.
                    let u_pp = C::new(c, T::zero());
                    let u_pq = C::new(s, T::zero());
                    let u_qp = phase.conj() * (-s);
                    let u_qq = phase.conj() * c;
                    // A <- A U
                    for row in a.m.iter_mut() {
                        let xp = row[p];
                        let xq = row[q];
                        row[p] = xp * u_pp + xq * u_qp;
                        row[q] = xp * u_pq + xq * u_qq;
                    }
                    // A <- U† A
                    for j in 0..N {
                        let xp = a.m[p][j];
                        let xq = a.m[q][j];
                        a.m[p][j] = u_pp.conj() * xp + u_qp.conj() * xq;
                        a.m[q][j] = u_pq.conj() * xp + u_qq.conj() * xq;
                    }
                    a.m[p][q] = C::zero();
                    a.m[q][p] = C::zero();
                    for row in v.m.iter_mut() {
                        let xp = row[p];
                        let xq = row[q];
                        row[p] = xp * u_pp + xq * u_qp;
                        row[q] = xp * u_pq + xq * u_qq;
                    }
                }
            }
        }
        let mut order: [usize; N] = std::array::from_fn(|i| i);
        order.sort_by(|&i, &j| {
            a.m[i][i]
                .re
                .partial_cmp(&a.m[j][j].re)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let vals = std::array::from_fn(|k| a.m[order[k]][order[k]].re);
        let vecs = Self::from_fn(|i, k| v.m[i][order[k]]);
        (vals, vecs)
    }

    pub fn eigenvalues_h(&self) -> [T; N] {
        self.eigh().0
    }

    pub fn min_eigenvalue_h(&self) -> T {
        self.eigh().0[0]
    }

    /// `f(A)` for Hermitian `A` through its spectrum.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Self {
        let (vals, vecs) = self.eigh();
        let mut out = Self::zeros();
        for (k, &lam) in vals.iter().enumerate() {
            let fl = f(lam);
            for i in 0..N {
                for j in 0..N {
                    out.m[i][j] = out.m[i][j] + vecs.m[i][k] * vecs.m[j][k].conj() * fl;
                }
            }
        }
        out
    }

    /// Principal square root of a PSD matrix. Eigenvalues within rounding
    /// noise of zero (relative to the largest) are clipped to zero.
    pub fn sqrt_psd(&self) -> Self {
        let floor = self.spectral_floor();
        self.map_spectrum(|x| if x <= floor { T::zero() } else { x.sqrt() })
    }

    /// Magnitude below which an eigenvalue is indistinguishable from zero.
    pub fn spectral_floor(&self) -> T {
        T::epsilon() * T::lit(8.0 * N as f64) * self.max_abs()
    }
}

impl<T: Real, const N: usize> Add for Matrix<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] + rhs.m[i][j])
    }
}

impl<T: Real, const N: usize> Sub for Matrix<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| self.m[i][j] - rhs.m[i][j])
    }
}

impl<T: Real, const N: usize> Mul for Matrix<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::from_fn(|i, j| (0..N).fold(C::zero(), |acc, k| acc + self.m[i][k] * rhs.m[k][j]))
    }
}

/// Kronecker product `a ⊗ b`; index of the result is `2·i_a + i_b`.
pub fn kron<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat4<T> {
    Mat4::from_fn(|r, c| a.m[r / 2][c / 2] * b.m[r % 2][c % 2])
}

/// Trace over the first tensor factor of a two-qubit operator.
pub fn partial_trace_first<T: Real>(x: &Mat4<T>) -> Mat2<T> {
    Mat2::from_fn(|i, j| x.m[i][j] + x.m[2 + i][2 + j])
}

/// Trace over the second tensor factor of a two-qubit operator.
pub fn partial_trace_second<T: Real>(x: &Mat4<T>) -> Mat2<T> {
    Mat2::from_fn(|i, j| x.m[2 * i][2 * j] + x.m[2 * i + 1][2 * j + 1])
}
