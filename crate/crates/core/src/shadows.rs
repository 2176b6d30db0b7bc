//! Randomized measurements, readout noise and shadow snapshots.
//!
//! Outcome bit `q` of a record is the readout of qubit `q`, i.e. bit `q` of
//! the computational-basis index. Pauli bases rotate by `I` (Z), `H` (X)
//! or `H S^dagger` (Y) before the computational-basis readout.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clifford::{sample_uniform_clifford, tableau_to_circuit, CliffordTableau};
use crate::error::{invalid, Error, Result};
use crate::qcore::{check_qubits, DensityMatrix, PureState};
use crate::scalar::{cone, cplx, czero, Real, C};

/// Single-qubit measurement axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// `U^dagger |bit>`: the eigenvector of this axis selected by `bit`.
    pub fn eigenvector<T: Real>(self, bit: u8) -> [C<T>; 2] {
        let s = T::FRAC_1_SQRT_2();
        let sign = if bit == 0 { T::one() } else { -T::one() };
        match self {
            Axis::Z if bit == 0 => [cone(), czero()],
            Axis::Z => [czero(), cone()],
            Axis::X => [cplx(s, T::zero()), cplx(sign * s, T::zero())],
            Axis::Y => [cplx(s, T::zero()), cplx(T::zero(), sign * s)],
        }
    }
}

/// Measurement ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Pauli,
    Clifford,
}

/// Product of single-qubit axes, one per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliBasis {
    axes: Vec<Axis>,
}

impl PauliBasis {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        check_qubits(axes.len(), 1)?;
        Ok(Self { axes })
    }

    /// Uniform over `{X, Y, Z}^n`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        check_qubits(n, 1)?;
        Ok(Self {
            axes: (0..n).map(|_| Axis::ALL[rng.random_range(0..3)]).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Pauli(PauliBasis),
    Clifford(CliffordTableau),
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(ensemble: Ensemble, n: usize, rng: &mut R) -> Result<Self> {
        Ok(match ensemble {
            Ensemble::Pauli => Basis::Pauli(PauliBasis::random(n, rng)?),
            Ensemble::Clifford => Basis::Clifford(sample_uniform_clifford(n, rng)?),
        })
    }

    pub fn n(&self) -> usize {
        match self {
            Basis::Pauli(b) => b.n(),
            Basis::Clifford(t) => t.n(),
        }
    }

    pub fn ensemble(&self) -> Ensemble {
        match self {
            Basis::Pauli(_) => Ensemble::Pauli,
            Basis::Clifford(_) => Ensemble::Clifford,
        }
    }
}

/// One measurement round: the basis and the bitstring read out.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MeasurementRecord {
    basis: Basis,
    outcome: Vec<u8>,
}

impl MeasurementRecord {
    pub fn new(basis: Basis, outcome: Vec<u8>) -> Result<Self> {
        if outcome.len() != basis.n() {
            return Err(Error::DimensionMismatch {
                expected: basis.n(),
                found: outcome.len(),
            });
        }
        if outcome.iter().any(|&b| b > 1) {
            return Err(invalid("outcome bits must be 0 or 1"));
        }
        Ok(Self { basis, outcome })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn ensemble(&self) -> Ensemble {
        self.basis.ensemble()
    }

    /// Outcome as a computational-basis index.
    pub fn outcome_index(&self) -> usize {
        bits_to_index(&self.outcome)
    }
}

pub(crate) fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().enumerate().map(|(q, &b)| (b as usize) << q).sum()
}

fn index_to_bits(idx: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| (idx >> q & 1) as u8).collect()
}

/// Independent readout flips with probability `lambda` per qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitFlipNoise {
    lambda: f64,
}

impl BitFlipNoise {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid(format!("flip probability {lambda} outside [0, 1]")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn corrupt<R: Rng + ?Sized>(&self, bits: &mut [u8], rng: &mut R) {
        for b in bits {
            if rng.random_bool(self.lambda) {
                *b ^= 1;
            }
        }
    }
}

/// `m <- U_q m U_q^dagger` for a 2x2 `u` on qubit `q`.
fn conjugate_single_qubit<T: Real>(m: &mut Array2<C<T>>, q: usize, u: &[[C<T>; 2]; 2]) {
    let d = m.nrows();
    let bit = 1 << q;
    for i in (0..d).filter(|i| i & bit == 0) {
        for c in 0..d {
            let (a, b) = (m[[i, c]], m[[i | bit, c]]);
            m[[i, c]] = u[0][0] * a + u[0][1] * b;
            m[[i | bit, c]] = u[1][0] * a + u[1][1] * b;
        }
    }
    for r in 0..d {
        for j in (0..d).filter(|j| j & bit == 0) {
            let (a, b) = (m[[r, j]], m[[r, j | bit]]);
            m[[r, j]] = a * u[0][0].conj() + b * u[0][1].conj();
            m[[r, j | bit]] = a * u[1][0].conj() + b * u[1][1].conj();
        }
    }
}

/// Exact readout distribution of `rho` in `basis`, before noise.
pub fn outcome_distribution<T: Real>(rho: &DensityMatrix<T>, basis: &Basis) -> Result<Vec<T>> {
    if basis.n() != rho.n() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: 1 << basis.n(),
        });
    }
    let rotated = match basis {
        Basis::Pauli(pb) => {
            let mut m = rho.data().clone();
            for (q, &axis) in pb.axes().iter().enumerate() {
                if axis == Axis::Z {
                    continue;
                }
                // Rows of U are the conjugated eigenvectors.
                let [a0, a1] = axis.eigenvector::<T>(0);
                let [b0, b1] = axis.eigenvector::<T>(1);
                let u = [[a0.conj(), a1.conj()], [b0.conj(), b1.conj()]];
                conjugate_single_qubit(&mut m, q, &u);
            }
            m
        }
        Basis::Clifford(t) => {
            let mut m = rho.data().clone();
            tableau_to_circuit(t)?.apply_to_matrix(&mut m);
            m
        }
    };
    Ok(rotated.diag().iter().map(|z| z.re.max(T::zero())).collect())
}

fn sample_index<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let total: f64 = probs.iter().map(|p| p.as_f64()).sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.as_f64();
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(0)
}

/// Measures `rho` in `basis`, then applies readout noise if given.
pub fn measure<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    basis: Basis,
    noise: Option<&BitFlipNoise>,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    let probs = outcome_distribution(rho, &basis)?;
    let mut bits = index_to_bits(sample_index(&probs, rng), rho.n());
    if let Some(nz) = noise {
        nz.corrupt(&mut bits, rng);
    }
    MeasurementRecord::new(basis, bits)
}

pub fn measure_pauli<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    basis: &PauliBasis,
    noise: Option<&BitFlipNoise>,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    measure(rho, Basis::Pauli(basis.clone()), noise, rng)
}

pub fn measure_clifford<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    t: &CliffordTableau,
    noise: Option<&BitFlipNoise>,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    measure(rho, Basis::Clifford(t.clone()), noise, rng)
}

/// `3 U^dagger |bit><bit| U - I` for the rotation of `axis`.
pub fn pauli_snapshot_factor<T: Real>(axis: Axis, bit: u8) -> Array2<C<T>> {
    let v = axis.eigenvector::<T>(bit);
    let three = T::lit(3.0);
    Array2::from_shape_fn((2, 2), |(r, c)| {
        let p = (v[r] * v[c].conj()).scale(three);
        if r == c {
            p - cone()
        } else {
            p
        }
    })
}

/// `(2^n + 1) U^dagger |b><b| U - I`, dense.
pub fn clifford_snapshot<T: Real>(t: &CliffordTableau, outcome: &[u8]) -> Result<Array2<C<T>>> {
    if outcome.len() != t.n() {
        return Err(Error::DimensionMismatch {
            expected: t.n(),
            found: outcome.len(),
        });
    }
    let phi = clifford_snapshot_vector(t, outcome)?;
    Ok(Snapshot::Clifford { phi }.to_dense())
}

fn clifford_snapshot_vector<T: Real>(t: &CliffordTableau, outcome: &[u8]) -> Result<Array1<C<T>>> {
    let mut phi = PureState::<T>::basis(t.n(), bits_to_index(outcome))?
        .amplitudes()
        .clone();
    tableau_to_circuit(t)?.apply_inverse_to_state(&mut phi);
    Ok(phi)
}

/// Snapshot of one record in a compact form.
#[derive(Clone, Debug)]
pub enum Snapshot<T: Real> {
    /// Tensor factors, qubit 0 first.
    Pauli { factors: Vec<Array2<C<T>>> },
    /// `(2^n + 1) |phi><phi| - I` with `phi = U^dagger |b>`.
    Clifford { phi: Array1<C<T>> },
}

impl<T: Real> Snapshot<T> {
    pub fn from_record(rec: &MeasurementRecord) -> Result<Self> {
        Ok(match rec.basis() {
            Basis::Pauli(pb) => Snapshot::Pauli {
                factors: pb
                    .axes()
                    .iter()
                    .zip(rec.outcome())
                    .map(|(&a, &b)| pauli_snapshot_factor(a, b))
                    .collect(),
            },
            Basis::Clifford(t) => Snapshot::Clifford {
                phi: clifford_snapshot_vector(t, rec.outcome())?,
            },
        })
    }

    pub fn n(&self) -> usize {
        match self {
            Snapshot::Pauli { factors } => factors.len(),
            Snapshot::Clifford { phi } => phi.len().trailing_zeros() as usize,
        }
    }

    pub fn to_dense(&self) -> Array2<C<T>> {
        match self {
            Snapshot::Pauli { factors } => {
                let mut m = Array2::from_elem((1, 1), cone());
                for f in factors.iter().rev() {
                    m = kron(&m, f);
                }
                m
            }
            Snapshot::Clifford { phi } => {
                let d = phi.len();
                let w = T::from_count(d + 1);
                Array2::from_shape_fn((d, d), |(r, c)| {
                    let p = (phi[r] * phi[c].conj()).scale(w);
                    if r == c {
                        p - cone()
                    } else {
                        p
                    }
                })
            }
        }
    }

    /// `<psi| snapshot |psi>` without forming the dense snapshot.
    pub fn expectation(&self, psi: &Array1<C<T>>) -> T {
        match self {
            Snapshot::Pauli { factors } => {
                let mut v = psi.clone();
                let d = v.len();
                for (q, f) in factors.iter().enumerate() {
                    let bit = 1 << q;
                    for i in (0..d).filter(|i| i & bit == 0) {
                        let (a, b) = (v[i], v[i | bit]);
                        v[i] = f[[0, 0]] * a + f[[0, 1]] * b;
                        v[i | bit] = f[[1, 0]] * a + f[[1, 1]] * b;
                    }
                }
                psi.iter()
                    .zip(v.iter())
                    .fold(czero::<T>(), |acc, (x, y)| acc + x.conj() * y)
                    .re
            }
            Snapshot::Clifford { phi } => {
                let overlap = psi
                    .iter()
                    .zip(phi.iter())
                    .fold(czero::<T>(), |acc, (x, y)| acc + x.conj() * y);
                T::from_count(phi.len() + 1) * overlap.norm_sqr() - psi.iter().map(|a| a.norm_sqr()).sum::<T>()
            }
        }
    }
}

pub(crate) fn kron<T: Real>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Array2<C<T>> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    Array2::from_shape_fn((ra * rb, ca * cb), |(r, c)| a[[r / rb, c / cb]] * b[[r % rb, c % cb]])
}

/// How a snapshot is contracted against the target observable.
pub trait SnapshotContraction<T: Real> {
    fn contract(&self, snapshot: &Snapshot<T>) -> Result<T>;
}

/// Generic dense `tr(snapshot O)` for Hermitian `O`.
#[derive(Clone, Debug)]
pub struct DenseObservable<T: Real> {
    o: Array2<C<T>>,
}

impl<T: Real> DenseObservable<T> {
    pub fn new(o: Array2<C<T>>) -> Result<Self> {
        let (r, c) = o.dim();
        if r != c || !r.is_power_of_two() {
            return Err(invalid(format!("observable shape {r}x{c} is not a qubit operator")));
        }
        let scale = o.iter().map(|z| z.norm().as_f64()).fold(1.0, f64::max);
        for i in 0..r {
            for j in i..r {
                if (o[[i, j]] - o[[j, i]].conj()).norm().as_f64() > 1e-10 * scale {
                    return Err(invalid("observable is not Hermitian"));
                }
            }
        }
        Ok(Self { o })
    }
}

impl<T: Real> SnapshotContraction<T> for DenseObservable<T> {
    fn contract(&self, snapshot: &Snapshot<T>) -> Result<T> {
        let s = snapshot.to_dense();
        if s.dim() != self.o.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.o.nrows(),
                found: s.nrows(),
            });
        }
        // tr(S O) = sum_{ij} S_ij O_ji
        Ok(s.iter()
            .zip(self.o.t().iter())
            .fold(czero::<T>(), |acc, (a, b)| acc + a * b)
            .re)
    }
}

/// `tr(snapshot |psi><psi|)` via a matrix-free expectation.
#[derive(Clone, Debug)]
pub struct PureProjector<T: Real> {
    psi: Array1<C<T>>,
}

impl<T: Real> PureProjector<T> {
    pub fn new(psi: &PureState<T>) -> Self {
        Self {
            psi: psi.amplitudes().clone(),
        }
    }
}

impl<T: Real> SnapshotContraction<T> for PureProjector<T> {
    fn contract(&self, snapshot: &Snapshot<T>) -> Result<T> {
        if 1 << snapshot.n() != self.psi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.psi.len(),
                found: 1 << snapshot.n(),
            });
        }
        Ok(snapshot.expectation(&self.psi))
    }
}

pub(crate) fn check_homogeneous(records: &[MeasurementRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        let (e, n) = (first.ensemble(), first.n());
        if records.iter().any(|r| r.ensemble() != e) {
            return Err(invalid("records mix Pauli and Clifford ensembles"));
        }
        if let Some(r) = records.iter().find(|r| r.n() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: r.n() });
        }
    }
    Ok(())
}

/// `(1/N) sum_k tr(snapshot_k O)` with a caller-chosen contraction.
pub fn estimate_linear_with<T: Real, S: SnapshotContraction<T> + ?Sized>(
    records: &[MeasurementRecord],
    contraction: &S,
) -> Result<T> {
    if records.is_empty() {
        return Err(invalid("at least one record is required"));
    }
    check_homogeneous(records)?;
    let mut sum = T::zero();
    for r in records {
        sum += contraction.contract(&Snapshot::from_record(r)?)?;
    }
    Ok(sum / T::from_count(records.len()))
}

/// `(1/N) sum_k tr(snapshot_k O)` for a dense Hermitian observable.
pub fn estimate_linear<T: Real>(records: &[MeasurementRecord], observable: &Array2<C<T>>) -> Result<T> {
    estimate_linear_with(records, &DenseObservable::new(observable.clone())?)
}

fn check_distribution<T: Real>(p: &[T], lambda: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("flip probability {lambda} outside [0, 1]")));
    }
    if p.is_empty() || !p.len().is_power_of_two() {
        return Err(invalid(format!("distribution length {} is not 2^n", p.len())));
    }
    Ok(p.len().trailing_zeros() as usize)
}

fn apply_per_qubit<T: Real>(p: &[T], a: T, b: T) -> Vec<T> {
    // Per-qubit matrix [[a, b], [b, a]].
    let mut out = p.to_vec();
    let n = p.len().trailing_zeros();
    for q in 0..n {
        let bit = 1 << q;
        for i in (0..out.len()).filter(|i| i & bit == 0) {
            let (x, y) = (out[i], out[i | bit]);
            out[i] = a * x + b * y;
            out[i | bit] = b * x + a * y;
        }
    }
    out
}

/// `M p` with `M = [[1 - l, l], [l, 1 - l]]^{⊗n}`.
pub fn apply_bitflip<T: Real>(p: &[T], lambda: f64) -> Result<Vec<T>> {
    check_distribution(p, lambda)?;
    let l = T::lit(lambda);
    Ok(apply_per_qubit(p, T::one() - l, l))
}

/// `M^{-1} p`, applied one qubit at a time. Entries may be negative.
pub fn invert_bitflip<T: Real>(p: &[T], lambda: f64) -> Result<Vec<T>> {
    check_distribution(p, lambda)?;
    let det = 1.0 - 2.0 * lambda;
    if det.abs() < 1e-12 {
        return Err(Error::SingularNoise(lambda));
    }
    Ok(apply_per_qubit(p, T::lit((1.0 - lambda) / det), T::lit(-lambda / det)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::{single_qubit_cliffords, CliffordTableau, Gate};
    use crate::qcore::{ghz_state, sample_hilbert_schmidt};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_dev(a: &Array2<C<f64>>, b: &Array2<C<f64>>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    /// Dense projector probability `<phi|rho|phi>` for a product of axis
    /// eigenvectors; independent of the rotation code path.
    fn oracle_probability(rho: &DensityMatrix<f64>, axes: &[Axis], bits: &[u8]) -> f64 {
        let mut phi = Array1::from_elem(1, C::new(1.0, 0.0));
        for (q, &a) in axes.iter().enumerate().rev() {
            let v = a.eigenvector::<f64>(bits[q]);
            phi = Array1::from_shape_fn(phi.len() * 2, |i| phi[i / 2] * v[i % 2]);
        }
        let rp = rho.data().dot(&phi);
        phi.iter().zip(rp.iter()).map(|(x, y)| x.conj() * y).sum::<C<f64>>().re
    }

    #[test]
    fn factor_examples() {
        let z0 = pauli_snapshot_factor::<f64>(Axis::Z, 0);
        assert_eq!(z0[[0, 0]], C::new(2.0, 0.0));
        assert_eq!(z0[[1, 1]], C::new(-1.0, 0.0));
        assert_eq!(z0[[0, 1]], C::new(0.0, 0.0));
        for a in Axis::ALL {
            for b in 0..2 {
                let f = pauli_snapshot_factor::<f64>(a, b);
                assert!(((f[[0, 0]] + f[[1, 1]]).re - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn factor_matches_paulis() {
        // 3 (I + s P)/2 - I = I/2 + 3 s P / 2.
        let x1 = pauli_snapshot_factor::<f64>(Axis::X, 1);
        assert!((x1[[0, 1]].re + 1.5).abs() < 1e-15);
        let y0 = pauli_snapshot_factor::<f64>(Axis::Y, 0);
        assert!((y0[[1, 0]].im - 1.5).abs() < 1e-15);
        assert!((y0[[0, 0]].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pauli_unbiased_by_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=2usize {
            for _ in 0..50 {
                let rho = sample_hilbert_schmidt::<f64, _>(n, &mut rng).unwrap();
                let d = 1 << n;
                let mut acc = Array2::from_elem((d, d), C::new(0.0, 0.0));
                for code in 0..3usize.pow(n as u32) {
                    let axes: Vec<Axis> = (0..n).map(|q| Axis::ALL[code / 3usize.pow(q as u32) % 3]).collect();
                    for idx in 0..d {
                        let bits = index_to_bits(idx, n);
                        let p = oracle_probability(&rho, &axes, &bits);
                        let rec = MeasurementRecord::new(
                            Basis::Pauli(PauliBasis::new(axes.clone()).unwrap()),
                            bits,
                        )
                        .unwrap();
                        let s = Snapshot::from_record(&rec).unwrap().to_dense();
                        acc = acc + s.mapv(|v| v * p);
                    }
                }
                acc.mapv_inplace(|v| v / 3f64.powi(n as i32));
                assert!(max_dev(&acc, rho.data()) < 1e-10);
            }
        }
    }

    #[test]
    fn clifford_unbiased_by_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let group = single_qubit_cliffords();
        for _ in 0..100 {
            let rho = sample_hilbert_schmidt::<f64, _>(1, &mut rng).unwrap();
            let mut acc = Array2::from_elem((2, 2), C::new(0.0, 0.0));
            for t in &group {
                for b in 0..2u8 {
                    let s = clifford_snapshot::<f64>(t, &[b]).unwrap();
                    // p(b) = <b| U rho U^dagger |b> via the dense unitary.
                    let u = tableau_to_circuit(t).unwrap().unitary::<f64>();
                    let r = u.dot(rho.data()).dot(&u.t().mapv(|v| v.conj()));
                    acc = acc + s.mapv(|v| v * r[[b as usize, b as usize]].re);
                }
            }
            acc.mapv_inplace(|v| v / 24.0);
            assert!(max_dev(&acc, rho.data()) < 1e-12);
        }
    }

    #[test]
    fn clifford_snapshot_examples() {
        let id = CliffordTableau::identity(1);
        let s = clifford_snapshot::<f64>(&id, &[0]).unwrap();
        assert!(max_dev(&s, &pauli_snapshot_factor(Axis::Z, 0)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=3 {
            let t = sample_uniform_clifford(n, &mut rng).unwrap();
            let b = vec![1u8; n];
            let s = clifford_snapshot::<f64>(&t, &b).unwrap();
            let tr: f64 = s.diag().iter().map(|z| z.re).sum();
            assert!((tr - 1.0).abs() < 1e-12);
        }
        assert!(clifford_snapshot::<f64>(&id, &[0, 1]).is_err());
    }

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let zero = PureState::<f64>::basis(1, 0).unwrap().to_density();
        let zb = PauliBasis::new(vec![Axis::Z]).unwrap();
        let xb = PauliBasis::new(vec![Axis::X]).unwrap();
        for _ in 0..200 {
            assert_eq!(measure_pauli(&zero, &zb, None, &mut rng).unwrap().outcome(), &[0]);
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = PureState::new(1, ndarray::arr1(&[C::new(s, 0.0), C::new(s, 0.0)])).unwrap().to_density();
        for _ in 0..200 {
            assert_eq!(measure_pauli(&plus, &xb, None, &mut rng).unwrap().outcome(), &[0]);
        }
        let noise = BitFlipNoise::new(0.1).unwrap();
        let ones = (0..10_000)
            .filter(|_| measure_pauli(&zero, &zb, Some(&noise), &mut rng).unwrap().outcome()[0] == 1)
            .count();
        assert!((ones as f64 / 1e4 - 0.1).abs() < 0.01, "{ones}");

        let mut h = CliffordTableau::identity(1);
        h.apply_gate(Gate::H(0));
        for _ in 0..200 {
            assert_eq!(measure_clifford(&plus, &h, None, &mut rng).unwrap().outcome(), &[0]);
        }
        let two = PureState::<f64>::basis(2, 0).unwrap().to_density();
        assert!(measure_pauli(&two, &zb, None, &mut rng).is_err());
        assert!(BitFlipNoise::new(1.5).is_err());
    }

    #[test]
    fn identity_clifford_reads_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho = sample_hilbert_schmidt::<f64, _>(2, &mut rng).unwrap();
        let diag = rho.diagonal_probabilities();
        let id = CliffordTableau::identity(2);
        let trials = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            let r = measure_clifford(&rho, &id, None, &mut rng).unwrap();
            assert_eq!(r.outcome().len(), 2);
            counts[r.outcome_index()] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(&diag)
            .filter(|(_, &p)| p > 1e-9)
            .map(|(&k, &p)| (k as f64 - trials as f64 * p).powi(2) / (trials as f64 * p))
            .sum();
        // chi-square(3) upper 0.1% point.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn rotation_matches_projector_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rho = sample_hilbert_schmidt::<f64, _>(3, &mut rng).unwrap();
        for _ in 0..20 {
            let pb = PauliBasis::random(3, &mut rng).unwrap();
            let p = outcome_distribution(&rho, &Basis::Pauli(pb.clone())).unwrap();
            for (idx, &pi) in p.iter().enumerate() {
                let o = oracle_probability(&rho, pb.axes(), &index_to_bits(idx, 3));
                assert!((pi - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rho = sample_hilbert_schmidt::<f64, _>(2, &mut rng).unwrap();
        let id: Array2<C<f64>> = Array2::from_diag(&Array1::from_elem(4, C::new(1.0, 0.0)));
        for ens in [Ensemble::Pauli, Ensemble::Clifford] {
            let recs: Vec<_> = (0..20)
                .map(|_| measure(&rho, Basis::random(ens, 2, &mut rng).unwrap(), None, &mut rng).unwrap())
                .collect();
            assert!((estimate_linear(&recs, &id).unwrap() - 1.0).abs() < 1e-12);

            let psi = ghz_state::<f64>(2).unwrap();
            let proj = psi.to_density().into_data();
            let one = estimate_linear(&recs[..1], &proj).unwrap();
            let direct = Snapshot::from_record(&recs[0]).unwrap().expectation(psi.amplitudes());
            assert!((one - direct).abs() < 1e-12);
            let a = estimate_linear(&recs, &proj).unwrap();
            let b = estimate_linear_with(&recs, &PureProjector::new(&psi)).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let mut bad = id.clone();
        bad[[0, 1]] = C::new(1.0, 0.0);
        let rec = measure(&rho, Basis::random(Ensemble::Pauli, 2, &mut rng).unwrap(), None, &mut rng).unwrap();
        assert!(estimate_linear(&[rec.clone()], &bad).is_err());
        let other = measure(&rho, Basis::random(Ensemble::Clifford, 2, &mut rng).unwrap(), None, &mut rng).unwrap();
        assert!(estimate_linear(&[rec, other], &id).is_err());
    }

    #[test]
    fn clifford_ghz_fidelity_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let psi = ghz_state::<f64>(2).unwrap();
        let rho = psi.to_density();
        let proj = PureProjector::new(&psi);
        let reps = 20;
        let mut mean = 0.0;
        for _ in 0..reps {
            let recs: Vec<_> = (0..2000)
                .map(|_| measure(&rho, Basis::random(Ensemble::Clifford, 2, &mut rng).unwrap(), None, &mut rng).unwrap())
                .collect();
            mean += estimate_linear_with(&recs, &proj).unwrap() / reps as f64;
        }
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn bitflip_inversion() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(invert_bitflip(&p, 0.0).unwrap(), p.to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let noisy = apply_bitflip(&p, 0.1).unwrap();
            assert!((noisy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let back = invert_bitflip(&noisy, 0.1).unwrap();
            for (a, b) in back.iter().zip(&p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(matches!(invert_bitflip(&p, 0.5), Err(Error::SingularNoise(_))));
        assert!(invert_bitflip(&[0.5, 0.25, 0.25], 0.1).is_err());
    }
}
