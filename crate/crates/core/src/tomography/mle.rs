//! Poisson maximum-likelihood reconstruction.
//!
//! The estimate is `σ = T T†` with `T` lower triangular (real diagonal), so
//! positivity holds for every iterate. Counts within one group (one input
//! state) share an unknown intensity, which is profiled out: the objective
//! is `Σ n_k log p_k − Σ_g N_g log Σ_{k∈g} p_k` with `p_k = Tr(O_k σ)`.
//! This is scale invariant, so `T` is renormalized freely.
//!
//! Ascent uses limited-memory BFGS directions on the real coordinates of
//! `T` with a backtracking step. Only steps that increase the likelihood
//! are accepted.

use crate::error::{Error, Result};
use crate::linalg::{kron, partial_trace_second, Mat2, Mat4, Matrix, C};
use crate::quantum::Chi;
use crate::{Basis, ProcessMatrix, QubitState};

use super::TomographyDataset;

pub const MAX_ITERATIONS: usize = 10_000;
const RELATIVE_TOLERANCE: f64 = 1e-10;
const MIN_STEP: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: MAX_ITERATIONS,
            relative_tolerance: RELATIVE_TOLERANCE,
        }
    }
}

/// Estimate together with the objective after every accepted step (the
/// first element is the starting point).
#[derive(Clone, Debug, PartialEq)]
pub struct MleReport<E> {
    pub estimate: E,
    pub log_likelihood: Vec<f64>,
}

struct Term<const N: usize> {
    op: Matrix<f64, N>,
    freq: f64,
    group: usize,
}

struct Likelihood<const N: usize> {
    terms: Vec<Term<N>>,
    group_freq: Vec<f64>,
}

impl<const N: usize> Likelihood<N> {
    /// Counts are scaled to unit total so the objective is O(1).
    fn new(raw: Vec<(Matrix<f64, N>, u64, usize)>) -> Self {
        let total: u64 = raw.iter().map(|r| r.1).sum();
        let groups = raw.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let mut group_freq = vec![0.0; groups];
        let terms: Vec<Term<N>> = raw
            .into_iter()
            .map(|(op, n, group)| {
                let freq = n as f64 / total as f64;
                group_freq[group] += freq;
                Term { op, freq, group }
            })
            .collect();
        Self { terms, group_freq }
    }

    fn probabilities(&self, c: &Matrix<f64, N>) -> (Vec<f64>, Vec<f64>) {
        let p: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.op.trace_product(c).re)
            .collect();
        let mut s = vec![0.0; self.group_freq.len()];
        for (t, &pk) in self.terms.iter().zip(&p) {
            s[t.group] += pk;
        }
        (p, s)
    }

    fn value(&self, c: &Matrix<f64, N>) -> f64 {
        let (p, s) = self.probabilities(c);
        let mut l = 0.0;
        for (t, &pk) in self.terms.iter().zip(&p) {
            if t.freq > 0.0 {
                if pk <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                l += t.freq * pk.ln();
            }
        }
        for (&ng, &sg) in self.group_freq.iter().zip(&s) {
            if ng > 0.0 {
                l -= ng * sg.ln();
            }
        }
        l
    }

    /// `∂L/∂C`, Hermitian.
    fn gradient(&self, c: &Matrix<f64, N>) -> Matrix<f64, N> {
        let (p, s) = self.probabilities(c);
        let mut g = Matrix::zeros();
        for (t, &pk) in self.terms.iter().zip(&p) {
            let mut w = 0.0;
            if t.freq > 0.0 && pk > 0.0 {
                w += t.freq / pk;
            }
            let (ng, sg) = (self.group_freq[t.group], s[t.group]);
            if ng > 0.0 && sg > 0.0 {
                w -= ng / sg;
            }
            if w != 0.0 {
                g = g + t.op.scale(w);
            }
        }
        g
    }
}

/// How the triangular factor maps to the estimated operator.
trait Parameterization<const N: usize> {
    fn forward(&self, sigma: &Matrix<f64, N>) -> Option<Matrix<f64, N>>;
    /// Pulls `∂L/∂C` back to `∂L/∂σ`.
    fn pullback(&self, sigma: &Matrix<f64, N>, grad: &Matrix<f64, N>) -> Matrix<f64, N>;
}

struct Plain;

impl<const N: usize> Parameterization<N> for Plain {
    fn forward(&self, sigma: &Matrix<f64, N>) -> Option<Matrix<f64, N>> {
        Some(*sigma)
    }
    fn pullback(&self, _: &Matrix<f64, N>, grad: &Matrix<f64, N>) -> Matrix<f64, N> {
        *grad
    }
}

/// Choi matrices with `Tr_out C = I`: `C = (A^{-1/2} ⊗ I) σ (A^{-1/2} ⊗ I)`
/// where `A = Tr_out σ`.
struct TracePreserving;

impl TracePreserving {
    fn parts(sigma: &Mat4<f64>) -> Option<(Mat2<f64>, Mat2<f64>, Mat2<f64>)> {
        let a = partial_trace_second(sigma).hermitian_part();
        let (vals, vecs) = a.eigh();
        if vals[0] <= 1e-300 {
            return None;
        }
        let b = vecs * Mat2::diag([vals[0].powf(-0.5), vals[1].powf(-0.5)]) * vecs.adjoint();
        Some((a, b, vecs))
    }
}

impl Parameterization<4> for TracePreserving {
    fn forward(&self, sigma: &Mat4<f64>) -> Option<Mat4<f64>> {
        let (_, b, _) = Self::parts(sigma)?;
        let bi = kron(&b, &Mat2::identity());
        Some((bi * *sigma * bi).hermitian_part())
    }

    fn pullback(&self, sigma: &Mat4<f64>, h: &Mat4<f64>) -> Mat4<f64> {
        let Some((a, b, u)) = Self::parts(sigma) else {
            return Mat4::zeros();
        };
        let bi = kron(&b, &Mat2::identity());
        // Direct term through σ.
        let direct = bi * *h * bi;
        // Term through A = Tr_out σ: dL = Tr(dB M) with
        // M = Tr_out[σ (B⊗I) H + H (B⊗I) σ], and dB the Fréchet derivative
        // of A^{-1/2}, evaluated in the eigenbasis of A.
        let m = partial_trace_second(&(*sigma * bi * *h + *h * bi * *sigma));
        let vals = a.eigh().0;
        let f = |x: f64| x.powf(-0.5);
        let df = |x: f64| -0.5 * x.powf(-1.5);
        let divided = |i: usize, j: usize| {
            if i == j || (vals[i] - vals[j]).abs() <= 1e-9 * vals[1].abs() {
                df(0.5 * (vals[i] + vals[j]))
            } else {
                (f(vals[i]) - f(vals[j])) / (vals[i] - vals[j])
            }
        };
        let mt = u.adjoint() * m * u;
        let qt = Mat2::from_fn(|i, j| mt.get(i, j) * divided(i, j));
        let q = (u * qt * u.adjoint()).hermitian_part();
        direct + kron(&q, &Mat2::identity())
    }
}

fn gram<const N: usize>(t: &Matrix<f64, N>) -> Matrix<f64, N> {
    (*t * t.adjoint()).hermitian_part()
}

/// Real coordinates of a lower-triangular matrix: diagonal, then the real
/// and imaginary parts of each strictly lower entry.
fn pack<const N: usize>(t: &Matrix<f64, N>) -> Vec<f64> {
    let mut v = Vec::with_capacity(N * N);
    for i in 0..N {
        v.push(t.get(i, i).re);
        for j in 0..i {
            let z = t.get(i, j);
            v.push(z.re);
            v.push(z.im);
        }
    }
    v
}

fn unpack<const N: usize>(v: &[f64]) -> Matrix<f64, N> {
    let at = |i: usize, j: usize| i * i + if i == j { 0 } else { 1 + 2 * j };
    Matrix::from_fn(|i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => C::new(v[at(i, j)], v[at(i, j) + 1]),
        std::cmp::Ordering::Equal => C::new(v[at(i, i)], 0.0),
        std::cmp::Ordering::Less => C::new(0.0, 0.0),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory quasi-Newton ascent direction from the stored
/// `(s, y)` pairs (`y` is the gradient change of the negated objective).
fn lbfgs_direction(grad: &[f64], memory: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q
}

const MEMORY: usize = 12;

fn maximize<const N: usize>(
    lik: &Likelihood<N>,
    param: &impl Parameterization<N>,
    opts: &MleOptions,
) -> Result<MleReport<Matrix<f64, N>>> {
    let eval = |x: &[f64]| -> Option<(f64, Matrix<f64, N>)> {
        let sigma = gram(&unpack::<N>(x));
        let c = param.forward(&sigma)?;
        let v = lik.value(&c);
        v.is_finite().then_some((v, c))
    };
    // Gradient of the objective with respect to the packed coordinates.
    let gradient = |x: &[f64], c: &Matrix<f64, N>| -> Vec<f64> {
        let t = unpack::<N>(x);
        let g = param.pullback(&gram(&t), &lik.gradient(c));
        pack(&(g * t)).into_iter().map(|v| 2.0 * v).collect()
    };
    let mut x = pack(&Matrix::<f64, N>::identity().scale(1.0 / (N as f64).sqrt()));
    let (mut l, mut c) = eval(&x).ok_or_else(|| Error::RankDeficient {
        reason: "likelihood undefined at the maximally mixed start".into(),
    })?;
    let mut g = gradient(&x, &c);
    let mut history = vec![l];
    let done = |c, history| {
        Ok(MleReport {
            estimate: c,
            log_likelihood: history,
        })
    };
    let mut memory: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut last_improvement = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let gnorm = norm(&g);
        if gnorm == 0.0 {
            return done(c, history);
        }
        let mut dir = lbfgs_direction(&g, &memory);
        let mut alpha = 1.0;
        if memory.is_empty() || dot(&dir, &g) <= 0.0 {
            memory.clear();
            dir = g.clone();
            alpha = 0.1 / gnorm;
        }
        let accepted = loop {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            match eval(&cand) {
                Some((lc, cc)) if lc > l => break Some((cand, lc, cc)),
                _ => {
                    alpha *= 0.5;
                    if alpha * norm(&dir) < MIN_STEP {
                        break None;
                    }
                }
            }
        };
        let Some((cand, lc, cc)) = accepted else {
            if memory.is_empty() {
                // No ascent direction left at working precision.
                return done(c, history);
            }
            memory.clear();
            continue;
        };
        last_improvement = (lc - l) / l.abs().max(1.0);
        let gc = gradient(&cand, &cc);
        let s: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gc).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if memory.len() == MEMORY {
                memory.remove(0);
            }
            memory.push((s, y, 1.0 / sy));
        }
        (x, l, c, g) = (cand, lc, cc, gc);
        history.push(l);
        // The objective is scale invariant; keep the factor near unit norm.
        let scale = norm(&x);
        if !(0.5..=2.0).contains(&scale) {
            x.iter_mut().for_each(|v| *v /= scale);
            g.iter_mut().for_each(|v| *v *= scale);
            memory.clear();
        }
        if last_improvement < opts.relative_tolerance {
            return done(c, history);
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        log_likelihood: l,
        last_improvement,
    })
}

/// Rank of a set of qubit operators as real 4-vectors in the Pauli basis.
fn operator_rank(ops: &[Mat2<f64>]) -> usize {
    let p = crate::quantum::paulis::<f64>();
    let mut rows: Vec<[f64; 4]> = ops
        .iter()
        .map(|o| std::array::from_fn(|m| p[m].trace_product(o).re))
        .collect();
    let mut rank = 0;
    for col in 0..4 {
        let Some(piv) =
            (rank..rows.len()).max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
        else {
            break;
        };
        if rows[piv][col].abs() < 1e-9 {
            continue;
        }
        rows.swap(rank, piv);
        let pivot = rows[rank];
        for r in rows.iter_mut().skip(rank + 1) {
            let f = r[col] / pivot[col];
            for k in 0..4 {
                r[k] -= f * pivot[k];
            }
        }
        rank += 1;
    }
    rank
}

fn require_informationally_complete(labels: &[Basis], what: &str) -> Result<()> {
    let ops: Vec<Mat2<f64>> = labels.iter().map(|b| b.projector()).collect();
    let rank = operator_rank(&ops);
    if rank < 4 {
        return Err(Error::RankDeficient {
            reason: format!("{what} span rank {rank} < 4"),
        });
    }
    Ok(())
}

fn settings_with_counts(data: &TomographyDataset) -> Vec<Basis> {
    let mut out: Vec<Basis> = Vec::new();
    for e in &data.entries {
        if e.counts > 0 && !out.contains(&e.setting) {
            out.push(e.setting);
        }
    }
    out
}

/// Single-qubit state from the rows of `data` belonging to `input`.
pub fn mle_state_reconstruct(
    data: &TomographyDataset,
    input: Basis,
    opts: &MleOptions,
) -> Result<QubitState> {
    Ok(mle_state_report(data, input, opts)?.estimate)
}

pub fn mle_state_report(
    data: &TomographyDataset,
    input: Basis,
    opts: &MleOptions,
) -> Result<MleReport<QubitState>> {
    let rows = data.for_input(input);
    require_informationally_complete(&settings_with_counts(&rows), "settings with counts")?;
    let lik = Likelihood::new(
        rows.entries
            .iter()
            .map(|e| (e.setting.projector(), e.counts, 0))
            .collect(),
    );
    let fit = maximize(&lik, &Plain, opts)?;
    Ok(MleReport {
        estimate: QubitState::new(fit.estimate.scale(1.0 / fit.estimate.trace().re))?,
        log_likelihood: fit.log_likelihood,
    })
}

/// Process matrix from rows covering all six inputs. `data` must carry a
/// single flag tag. With `constrain_tp` the Choi matrix is restricted to
/// trace-preserving maps; otherwise the result is trace-normalized.
pub fn mle_process_reconstruct(
    data: &TomographyDataset,
    constrain_tp: bool,
    opts: &MleOptions,
) -> Result<ProcessMatrix> {
    Ok(mle_process_report(data, constrain_tp, opts)?.estimate)
}

pub fn mle_process_report(
    data: &TomographyDataset,
    constrain_tp: bool,
    opts: &MleOptions,
) -> Result<MleReport<ProcessMatrix>> {
    if data.flag_tags().len() > 1 {
        return Err(Error::invalid(
            "flag_outcome",
            "process reconstruction needs a single flag tag",
        ));
    }
    let inputs = data.inputs();
    if let Some(missing) = Basis::ALL.iter().find(|b| !inputs.contains(b)) {
        return Err(Error::RankDeficient {
            reason: format!("input {missing} absent"),
        });
    }
    let inputs_with_counts: Vec<Basis> = inputs
        .iter()
        .copied()
        .filter(|&b| data.entries.iter().any(|e| e.input == b && e.counts > 0))
        .collect();
    require_informationally_complete(&inputs_with_counts, "inputs with counts")?;
    require_informationally_complete(&settings_with_counts(data), "settings with counts")?;

    let lik = Likelihood::new(
        data.entries
            .iter()
            .map(|e| {
                let group = inputs
                    .iter()
                    .position(|&b| b == e.input)
                    .expect("listed input");
                let op = kron(
                    &e.input.projector::<f64>().transpose(),
                    &e.setting.projector(),
                );
                (op, e.counts, group)
            })
            .collect(),
    );
    let fit = if constrain_tp {
        maximize(&lik, &TracePreserving, opts)?
    } else {
        maximize(&lik, &Plain, opts)?
    };
    Ok(MleReport {
        estimate: Chi::from_choi(&fit.estimate)?.trace_normalized()?,
        log_likelihood: fit.log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process_fidelity;
    use crate::protocol::{effective_channel, HeraldMode, NoiseParams};
    use crate::state_fidelity;
    use crate::tomography::{expected_tomography, FlagTag};

    fn exact(chi: &ProcessMatrix) -> TomographyDataset {
        expected_tomography(chi, &Basis::ALL, &Basis::ALL, FlagTag::Pooled, 1e8, 0.0).unwrap()
    }

    #[test]
    fn trace_preserving_pullback_matches_finite_differences() {
        let lik = Likelihood::new(
            exact(
                &effective_channel(
                    &NoiseParams {
                        interferometer_dephasing: 0.1,
                        pockels_phase_error: 0.3,
                        residual_rotation: 0.05,
                    },
                    HeraldMode::PooledFeedforward,
                )
                .unwrap(),
            )
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                (
                    kron(
                        &e.input.projector::<f64>().transpose(),
                        &e.setting.projector(),
                    ),
                    e.counts + i as u64 * 1000,
                    i / 6,
                )
            })
            .collect(),
        );
        let t = Mat4::from_fn(|i, j| {
            if i >= j {
                C::new(
                    0.3 + 0.1 * (i * 4 + j) as f64,
                    if i > j {
                        0.05 * (i + 2 * j) as f64
                    } else {
                        0.0
                    },
                )
            } else {
                C::new(0.0, 0.0)
            }
        });
        let sigma = gram(&t);
        let tp = TracePreserving;
        let c = tp.forward(&sigma).unwrap();
        assert!(partial_trace_second(&c).max_abs_diff(&Mat2::identity()) < 1e-12);
        let g = tp.pullback(&sigma, &lik.gradient(&c));
        let f = |s: &Mat4<f64>| lik.value(&tp.forward(s).unwrap());
        let h = 1e-6;
        for (i, j) in [(0, 0), (1, 2), (3, 1), (2, 2), (0, 3)] {
            for im in [false, true] {
                if i == j && im {
                    continue;
                }
                let e = Mat4::from_fn(|r, c| {
                    let v = if im {
                        C::new(0.0, 1.0)
                    } else {
                        C::new(1.0, 0.0)
                    };
                    if (r, c) == (i, j) {
                        v
                    } else if (r, c) == (j, i) {
                        v.conj()
                    } else {
                        C::new(0.0, 0.0)
                    }
                });
                let num = (f(&(sigma + e.scale(h))) - f(&(sigma - e.scale(h)))) / (2.0 * h);
                let ana = g.trace_product(&e).re;
                assert!(
                    (num - ana).abs() < 1e-6 * (1.0 + ana.abs()),
                    "({i},{j},{im}): {num} vs {ana}"
                );
            }
        }
    }

    #[test]
    fn exact_state_data() {
        let id = ProcessMatrix::identity();
        let d = exact(&id);
        let rho = mle_state_reconstruct(&d, Basis::H, &MleOptions::default()).unwrap();
        assert!(state_fidelity(&rho, &QubitState::from_label(Basis::H)) >= 0.9999);
        let mixed = effective_channel::<f64>(&NoiseParams::ideal(), HeraldMode::Pooled).unwrap();
        let d = exact(&mixed);
        let rho = mle_state_reconstruct(&d, Basis::D, &MleOptions::default()).unwrap();
        assert!(rho.matrix().max_abs_diff(&Mat2::identity().scale(0.5)) < 1e-4);
    }

    #[test]
    fn exact_process_data() {
        for (chi, tp) in [
            (ProcessMatrix::identity(), true),
            (ProcessMatrix::identity(), false),
            (ProcessMatrix::pauli(3), false),
        ] {
            let est = mle_process_reconstruct(&exact(&chi), tp, &MleOptions::default()).unwrap();
            assert!(process_fidelity(&est, &chi) >= 0.999);
        }
    }

    #[test]
    fn rank_deficiency() {
        let d = exact(&ProcessMatrix::identity());
        let only_hv = d.map_counts(|_, c| c);
        let only_hv = TomographyDataset {
            entries: only_hv
                .entries
                .into_iter()
                .filter(|e| matches!(e.setting, Basis::H | Basis::V))
                .collect(),
            ..only_hv
        };
        assert!(matches!(
            mle_state_reconstruct(&only_hv, Basis::H, &MleOptions::default()),
            Err(Error::RankDeficient { .. })
        ));
        let no_l = TomographyDataset {
            entries: d
                .entries
                .iter()
                .copied()
                .filter(|e| e.input != Basis::L)
                .collect(),
            ..d.clone()
        };
        assert!(matches!(
            mle_process_reconstruct(&no_l, false, &MleOptions::default()),
            Err(Error::RankDeficient { .. })
        ));
        let zero = d.map_counts(|_, _| 0);
        assert!(mle_process_reconstruct(&zero, false, &MleOptions::default()).is_err());
    }
}
