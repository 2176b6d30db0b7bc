//! Dense quantum states and the primitives the estimators are built on.
//!
//! Qubit `q` is bit `q` of a computational-basis index (little-endian), so
//! `|b_{n-1} ... b_1 b_0>` has index `sum_q b_q 2^q`. Subsystems are given as
//! 0-based qubit index sets.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::scalar::{cone, cplx, czero, Real, C};

/// Largest register the dense representation supports.
pub const MAX_QUBITS: usize = 8;

/// Tolerance `base` for `f64`, loosened to the precision of narrower types.
pub(crate) fn tol<T: Real>(base: f64) -> f64 {
    base.max(T::epsilon().as_f64() * 1e3)
}

pub(crate) fn check_qubits(n: usize, min: usize) -> Result<()> {
    if n < min || n > MAX_QUBITS {
        return Err(invalid(format!(
            "qubit count {n} outside supported range {min}..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState<T: Real> {
    n: usize,
    amps: Array1<C<T>>,
}

impl<T: Real> PureState<T> {
    pub fn new(n: usize, amps: Array1<C<T>>) -> Result<Self> {
        check_qubits(n, 1)?;
        if amps.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                found: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr().as_f64()).sum();
        if (norm - 1.0).abs() > tol::<T>(1e-12) {
            return Err(invalid(format!("state norm^2 = {norm}, expected 1")));
        }
        Ok(Self { n, amps })
    }

    /// Wraps amplitudes that are normalized by construction.
    pub(crate) fn from_normalized(n: usize, amps: Array1<C<T>>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n);
        Self { n, amps }
    }

    /// The computational basis state `|index>`.
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_qubits(n, 1)?;
        if index >= 1 << n {
            return Err(invalid(format!("basis index {index} out of range")));
        }
        let mut amps = Array1::from_elem(1 << n, czero());
        amps[index] = cone();
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &Array1<C<T>> {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState<T>) -> C<T> {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .fold(czero(), |acc, (a, b)| acc + a.conj() * b)
    }

    /// The projector `|psi><psi|`.
    pub fn to_density(&self) -> DensityMatrix<T> {
        let d = self.dim();
        let data = Array2::from_shape_fn((d, d), |(r, c)| self.amps[r] * self.amps[c].conj());
        DensityMatrix { n: self.n, data }
    }
}

/// A density matrix on `n` qubits.
///
/// Constructors that accept arbitrary data validate hermiticity, unit trace
/// and positivity; internal constructions that preserve those properties
/// skip the eigenvalue check.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    n: usize,
    data: Array2<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates and wraps `data`.
    pub fn from_matrix(n: usize, data: Array2<C<T>>) -> Result<Self> {
        check_qubits(n, 1)?;
        let d = 1 << n;
        if data.dim() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: data.nrows(),
            });
        }
        let rho = Self { n, data };
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps `data` without checking invariants.
    pub fn from_matrix_unchecked(n: usize, data: Array2<C<T>>) -> Self {
        debug_assert_eq!(data.dim(), (1 << n, 1 << n));
        Self { n, data }
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_qubits(n, 1)?;
        let d = 1 << n;
        let w = cplx(T::one() / T::from_count(d), T::zero());
        let mut data = Array2::from_elem((d, d), czero());
        for i in 0..d {
            data[[i, i]] = w;
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Array2<C<T>> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C<T>> {
        self.data
    }

    pub fn trace(&self) -> C<T> {
        self.data.diag().iter().fold(czero(), |acc, &x| acc + x)
    }

    /// `tr(rho^2)`, using hermiticity: `sum_ij |rho_ij|^2`.
    pub fn purity(&self) -> T {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Largest elementwise deviation `|rho - rho^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for r in 0..d {
            for c in r..d {
                let dev = (self.data[[r, c]] - self.data[[c, r]].conj()).norm().as_f64();
                worst = worst.max(dev);
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part, computed in `f64`.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = nalgebra::DMatrix::from_fn(d, d, |r, c| {
            let a = self.data[[r, c]];
            let b = self.data[[c, r]].conj();
            nalgebra::Complex::new(
                0.5 * (a.re.as_f64() + b.re.as_f64()),
                0.5 * (a.im.as_f64() + b.im.as_f64()),
            )
        });
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks hermiticity (1e-10), unit trace (1e-10) and the eigenvalue
    /// floor (-1e-9).
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > tol::<T>(1e-10) {
            return Err(invalid(format!("matrix not Hermitian (deviation {herm:e})")));
        }
        let tr = self.trace();
        let tr_err = (tr - cone()).norm().as_f64();
        if tr_err > tol::<T>(1e-10) {
            return Err(invalid(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig < -tol::<T>(1e-9) {
            return Err(invalid(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(())
    }

    /// `(1 - p) self + p other`.
    pub fn mix(&self, other: &DensityMatrix<T>, p: T) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if p < T::zero() || p > T::one() {
            return Err(invalid(format!("mixing weight {p} outside [0, 1]")));
        }
        let a = cplx(T::one() - p, T::zero());
        let b = cplx(p, T::zero());
        let data = &self.data.mapv(|x| x * a) + &other.data.mapv(|x| x * b);
        Ok(Self { n: self.n, data })
    }

    /// `low ⊗ high` with `low` on qubits `0..low.n()` and `high` above it.
    pub fn tensor(low: &DensityMatrix<T>, high: &DensityMatrix<T>) -> Result<Self> {
        let n = low.n + high.n;
        check_qubits(n, 1)?;
        let dl = low.dim();
        let d = 1 << n;
        let data = Array2::from_shape_fn((d, d), |(r, c)| {
            low.data[[r % dl, c % dl]] * high.data[[r / dl, c / dl]]
        });
        Ok(Self { n, data })
    }

    /// Real parts of the diagonal, i.e. computational-basis probabilities.
    pub fn diagonal_probabilities(&self) -> Vec<T> {
        self.data.diag().iter().map(|x| x.re).collect()
    }
}

/// Basis-index bookkeeping for a bipartition `A | B`.
///
/// `a_offsets[i]` is the full-register index contribution of the reduced
/// index `i` on `A` (the k-th qubit of `A` in increasing order carries bit
/// k of `i`); `b_offsets` likewise for the complement.
#[derive(Clone, Debug)]
pub(crate) struct Bipartition {
    pub a_offsets: Vec<usize>,
    pub b_offsets: Vec<usize>,
}

impl Bipartition {
    pub fn new(n: usize, subsystem_a: &[usize]) -> Result<Self> {
        let a = normalize_subsystem(n, subsystem_a)?;
        let b: Vec<usize> = (0..n).filter(|q| !a.contains(q)).collect();
        Ok(Self {
            a_offsets: scatter_offsets(&a),
            b_offsets: scatter_offsets(&b),
        })
    }

    pub fn dim_a(&self) -> usize {
        self.a_offsets.len()
    }
}

fn scatter_offsets(qubits: &[usize]) -> Vec<usize> {
    (0..1usize << qubits.len())
        .map(|i| {
            qubits
                .iter()
                .enumerate()
                .filter(|(k, _)| i >> k & 1 == 1)
                .map(|(_, &q)| 1 << q)
                .sum()
        })
        .collect()
}

/// Sorted, deduplicated copy of a nonempty subsystem within `0..n`.
pub fn normalize_subsystem(n: usize, subsystem: &[usize]) -> Result<Vec<usize>> {
    if subsystem.is_empty() {
        return Err(invalid("subsystem must be nonempty"));
    }
    let mut a = subsystem.to_vec();
    a.sort_unstable();
    a.dedup();
    if let Some(&q) = a.iter().find(|&&q| q >= n) {
        return Err(invalid(format!("qubit {q} outside register of {n} qubits")));
    }
    Ok(a)
}

/// `tr_B` of an arbitrary square matrix on `n` qubits.
pub(crate) fn partial_trace_raw<T: Real>(m: &Array2<C<T>>, part: &Bipartition) -> Array2<C<T>> {
    let da = part.dim_a();
    Array2::from_shape_fn((da, da), |(i, j)| {
        let (oi, oj) = (part.a_offsets[i], part.a_offsets[j]);
        part.b_offsets
            .iter()
            .fold(czero(), |acc, &ob| acc + m[[oi | ob, oj | ob]])
    })
}

/// `tr_B(|phi><phi|)` straight from the vector.
pub(crate) fn reduced_projector<T: Real>(phi: &Array1<C<T>>, part: &Bipartition) -> Array2<C<T>> {
    let da = part.dim_a();
    Array2::from_shape_fn((da, da), |(i, j)| {
        let (oi, oj) = (part.a_offsets[i], part.a_offsets[j]);
        part.b_offsets
            .iter()
            .fold(czero(), |acc, &ob| acc + phi[oi | ob] * phi[oj | ob].conj())
    })
}

/// `Re tr(X Y)` for Hermitian `X`, `Y`, summed so the result is bitwise
/// symmetric in its arguments.
pub(crate) fn hermitian_trace_product<T: Real>(x: &Array2<C<T>>, y: &Array2<C<T>>) -> T {
    x.iter()
        .zip(y.iter())
        .fold(T::zero(), |acc, (a, b)| acc + (a.re * b.re + a.im * b.im))
}

/// `(|0...0> + |1...1>) / sqrt(2)`.
pub fn ghz_state<T: Real>(n: usize) -> Result<PureState<T>> {
    check_qubits(n, 1)?;
    let d = 1usize << n;
    let h = cplx(T::FRAC_1_SQRT_2(), T::zero());
    let mut amps = Array1::from_elem(d, czero());
    amps[0] = h;
    amps[d - 1] = h;
    Ok(PureState::from_normalized(n, amps))
}

/// `(1 - lambda) |psi><psi| + lambda I / 2^n`.
pub fn depolarize<T: Real>(psi: &PureState<T>, lambda: T) -> Result<DensityMatrix<T>> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(invalid(format!("depolarizing strength {lambda} outside [0, 1]")));
    }
    let pure = psi.to_density();
    if lambda == T::zero() {
        return Ok(pure);
    }
    pure.mix(&DensityMatrix::maximally_mixed(psi.n())?, lambda)
}

/// Draws `G G^dagger / tr(G G^dagger)` with `G` complex Ginibre, entries
/// `(x + i y) / sqrt(2)`.
pub fn sample_hilbert_schmidt<T: Real, R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<DensityMatrix<T>> {
    check_qubits(n, 1)?;
    let d = 1usize << n;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = Array2::from_shape_simple_fn((d, d), || {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        cplx(T::lit(x * s), T::lit(y * s))
    });
    let gdag = g.t().mapv(|z| z.conj());
    let mut gram = g.dot(&gdag);
    let tr: T = gram.diag().iter().map(|z| z.re).sum();
    gram.mapv_inplace(|z| z / tr);
    // Enforce exact hermiticity against rounding in the product.
    for r in 0..d {
        gram[[r, r]].im = T::zero();
        for c in r + 1..d {
            let avg = (gram[[r, c]] + gram[[c, r]].conj()) * cplx(T::lit(0.5), T::zero());
            gram[[r, c]] = avg;
            gram[[c, r]] = avg.conj();
        }
    }
    Ok(DensityMatrix { n, data: gram })
}

/// Reduced state on `subsystem_a`, tracing out the complement.
pub fn partial_trace_b<T: Real>(rho: &DensityMatrix<T>, subsystem_a: &[usize]) -> Result<DensityMatrix<T>> {
    let part = Bipartition::new(rho.n(), subsystem_a)?;
    let na = part.dim_a().trailing_zeros() as usize;
    Ok(DensityMatrix {
        n: na,
        data: partial_trace_raw(rho.data(), &part),
    })
}

/// `<psi| rho |psi>`, returned unclipped.
pub fn fidelity_with_pure<T: Real>(rho: &DensityMatrix<T>, psi: &PureState<T>) -> Result<T> {
    if rho.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let a = psi.amplitudes();
    let rho_psi = rho.data().dot(a);
    Ok(a.iter()
        .zip(rho_psi.iter())
        .fold(czero::<T>(), |acc, (x, y)| acc + x.conj() * y)
        .re)
}

/// `tr((rho ⊗ rho) S_A) = tr(rho_A^2)`.
pub fn swap_functional<T: Real>(rho: &DensityMatrix<T>, subsystem_a: &[usize]) -> Result<T> {
    Ok(partial_trace_b(rho, subsystem_a)?.purity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ghz_amplitudes() {
        let one = ghz_state::<f64>(1).unwrap();
        for a in one.amplitudes() {
            assert!(close(a.re, std::f64::consts::FRAC_1_SQRT_2, 1e-15));
        }
        let three = ghz_state::<f64>(3).unwrap();
        for (i, a) in three.amplitudes().iter().enumerate() {
            let expect = if i == 0 || i == 7 { std::f64::consts::FRAC_1_SQRT_2 } else { 0.0 };
            assert_eq!(a.re, expect);
            assert_eq!(a.im, 0.0);
        }
        let g2 = ghz_state::<f64>(2).unwrap();
        let f = fidelity_with_pure(&g2.to_density(), &g2).unwrap();
        assert!(close(f, 1.0, 1e-15));
        assert!(ghz_state::<f64>(0).is_err());
        assert!(ghz_state::<f64>(9).is_err());
    }

    #[test]
    fn depolarize_cases() {
        let g = ghz_state::<f64>(3).unwrap();
        assert_eq!(depolarize(&g, 0.0).unwrap(), g.to_density());
        for lambda in [0.0, 0.03, 0.08, 0.5, 1.0] {
            let rho = depolarize(&g, lambda).unwrap();
            rho.validate().unwrap();
            let f = fidelity_with_pure(&rho, &g).unwrap();
            assert!(close(f, 1.0 - lambda * (1.0 - 1.0 / 8.0), 1e-14));
        }
        let rho = depolarize(&g, 0.08).unwrap();
        assert!(close(fidelity_with_pure(&rho, &g).unwrap(), 0.93, 1e-12));

        let full = depolarize(&ghz_state::<f64>(2).unwrap(), 1.0).unwrap();
        assert_eq!(full, DensityMatrix::maximally_mixed(2).unwrap());
        assert!(depolarize(&g, -0.1).is_err());
        assert!(depolarize(&g, 1.1).is_err());
    }

    #[test]
    fn hilbert_schmidt_draws_are_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            for _ in 0..20 {
                let rho = sample_hilbert_schmidt::<f64, _>(n, &mut rng).unwrap();
                assert!((rho.trace().re - 1.0).abs() < 1e-10);
                assert!(rho.min_eigenvalue() >= -1e-9);
                rho.validate().unwrap();
            }
        }
    }

    #[test]
    fn hilbert_schmidt_mean_purity_single_qubit() {
        // Oracle (numpy Ginibre, 1e5 draws): 0.7989; analytic 2d/(d^2+1) = 0.8.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mean: f64 = (0..draws)
            .map(|_| sample_hilbert_schmidt::<f64, _>(1, &mut rng).unwrap().purity())
            .sum::<f64>()
            / draws as f64;
        assert!(close(mean, 0.8, 0.01), "mean purity {mean}");
    }

    #[test]
    fn partial_trace_examples() {
        let g2 = ghz_state::<f64>(2).unwrap().to_density();
        let red = partial_trace_b(&g2, &[0]).unwrap();
        assert!(close(red.data()[[0, 0]].re, 0.5, 1e-15));
        assert!(close(red.data()[[1, 1]].re, 0.5, 1e-15));
        assert!(red.data()[[0, 1]].norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sa = sample_hilbert_schmidt::<f64, _>(2, &mut rng).unwrap();
        let sb = sample_hilbert_schmidt::<f64, _>(1, &mut rng).unwrap();
        let prod = DensityMatrix::tensor(&sa, &sb).unwrap();
        let back = partial_trace_b(&prod, &[0, 1]).unwrap();
        for (x, y) in back.data().iter().zip(sa.data().iter()) {
            assert!((x - y).norm() < 1e-14);
        }
        let back_b = partial_trace_b(&prod, &[2]).unwrap();
        for (x, y) in back_b.data().iter().zip(sb.data().iter()) {
            assert!((x - y).norm() < 1e-14);
        }

        let g4 = ghz_state::<f64>(4).unwrap().to_density();
        let red = partial_trace_b(&g4, &[0, 1]).unwrap();
        assert!(close(red.purity(), 0.5, 1e-14));

        assert!(partial_trace_b(&g4, &[]).is_err());
        assert!(partial_trace_b(&g4, &[4]).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = ghz_state::<f64>(3).unwrap();
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        assert!(close(fidelity_with_pure(&mixed, &g).unwrap(), 1.0 / 8.0, 1e-15));
        let rho = sample_hilbert_schmidt::<f64, _>(2, &mut rng).unwrap();
        assert!(matches!(
            fidelity_with_pure(&rho, &g),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn swap_functional_examples() {
        let prod = PureState::<f64>::basis(3, 5).unwrap().to_density();
        for a in [vec![0], vec![1, 2], vec![0, 1, 2]] {
            assert!(close(swap_functional(&prod, &a).unwrap(), 1.0, 1e-15));
        }
        let g2 = ghz_state::<f64>(2).unwrap().to_density();
        assert!(close(swap_functional(&g2, &[0]).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn f32_states_work() {
        let g = ghz_state::<f32>(3).unwrap();
        let rho = depolarize(&g, 0.08f32).unwrap();
        rho.validate().unwrap();
        assert!((fidelity_with_pure(&rho, &g).unwrap() - 0.93).abs() < 1e-6);
    }
}
