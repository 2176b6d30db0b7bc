//! Clifford unitaries as stabilizer tableaus.
//!
//! A tableau for `U` stores `2n` rows: row `q` is `U X_q U^dagger` and row
//! `n + q` is `U Z_q U^dagger`, each as X bits, Z bits and a sign. A row
//! with bits `(x, z)` on a qubit denotes `I`, `X`, `Z` or `Y` for `(0,0)`,
//! `(1,0)`, `(0,1)`, `(1,1)`.
//!
//! Sampling follows the Koenig–Smolin construction of a uniform symplectic
//! matrix from transvections; synthesis reduces the tableau to the
//! identity with H, S and CNOT column operations.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::qcore::{check_qubits, DensityMatrix};
use crate::scalar::{cplx, czero, Real, C};

/// Elementary Clifford gate on 0-based qubit indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    H(usize),
    S(usize),
    Cnot { control: usize, target: usize },
}

/// A gate sequence, applied first to last.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliffordCircuit {
    n: usize,
    gates: Vec<Gate>,
}

impl CliffordCircuit {
    pub fn new(n: usize, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            let ok = match *g {
                Gate::H(q) | Gate::S(q) => q < n,
                Gate::Cnot { control, target } => control < n && target < n && control != target,
            };
            if !ok {
                return Err(invalid(format!("gate {g:?} invalid on {n} qubits")));
            }
        }
        Ok(Self { n, gates })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// `|psi> <- U |psi>`.
    pub fn apply_to_state<T: Real>(&self, amps: &mut Array1<C<T>>) {
        for &g in &self.gates {
            apply_gate_vec(amps, g, false);
        }
    }

    /// `|psi> <- U^dagger |psi>`.
    pub fn apply_inverse_to_state<T: Real>(&self, amps: &mut Array1<C<T>>) {
        for &g in self.gates.iter().rev() {
            apply_gate_vec(amps, g, true);
        }
    }

    /// `m <- U m U^dagger`, one gate at a time.
    pub fn apply_to_matrix<T: Real>(&self, m: &mut Array2<C<T>>) {
        for &g in &self.gates {
            apply_gate_conjugation(m, g);
        }
    }

    /// Dense `2^n x 2^n` unitary.
    pub fn unitary<T: Real>(&self) -> Array2<C<T>> {
        let d = 1usize << self.n;
        let mut u = Array2::from_elem((d, d), czero());
        for col in 0..d {
            let mut v = Array1::from_elem(d, czero());
            v[col] = cplx(T::one(), T::zero());
            self.apply_to_state(&mut v);
            u.column_mut(col).assign(&v);
        }
        u
    }
}

fn apply_gate_vec<T: Real>(v: &mut Array1<C<T>>, g: Gate, inverse: bool) {
    let d = v.len();
    match g {
        Gate::H(q) => {
            let s = T::FRAC_1_SQRT_2();
            let bit = 1 << q;
            for i in (0..d).filter(|i| i & bit == 0) {
                let (a, b) = (v[i], v[i | bit]);
                v[i] = (a + b).scale(s);
                v[i | bit] = (a - b).scale(s);
            }
        }
        Gate::S(q) => {
            let bit = 1 << q;
            let phase = if inverse {
                cplx(T::zero(), -T::one())
            } else {
                cplx(T::zero(), T::one())
            };
            for i in (0..d).filter(|i| i & bit != 0) {
                v[i] = v[i] * phase;
            }
        }
        Gate::Cnot { control, target } => {
            let (cb, tb) = (1 << control, 1 << target);
            for i in (0..d).filter(|i| i & cb != 0 && i & tb == 0) {
                v.swap(i, i | tb);
            }
        }
    }
}

fn apply_gate_conjugation<T: Real>(m: &mut Array2<C<T>>, g: Gate) {
    let d = m.nrows();
    match g {
        Gate::H(q) => {
            let s = T::FRAC_1_SQRT_2();
            let bit = 1 << q;
            for i in (0..d).filter(|i| i & bit == 0) {
                for c in 0..d {
                    let (a, b) = (m[[i, c]], m[[i | bit, c]]);
                    m[[i, c]] = (a + b).scale(s);
                    m[[i | bit, c]] = (a - b).scale(s);
                }
            }
            for r in 0..d {
                for j in (0..d).filter(|j| j & bit == 0) {
                    let (a, b) = (m[[r, j]], m[[r, j | bit]]);
                    m[[r, j]] = (a + b).scale(s);
                    m[[r, j | bit]] = (a - b).scale(s);
                }
            }
        }
        Gate::S(q) => {
            let bit = 1 << q;
            let i_unit = cplx(T::zero(), T::one());
            let minus_i = cplx(T::zero(), -T::one());
            for r in 0..d {
                for c in 0..d {
                    match (r & bit != 0, c & bit != 0) {
                        (true, false) => m[[r, c]] = m[[r, c]] * i_unit,
                        (false, true) => m[[r, c]] = m[[r, c]] * minus_i,
                        _ => {}
                    }
                }
            }
        }
        Gate::Cnot { control, target } => {
            let (cb, tb) = (1 << control, 1 << target);
            for i in (0..d).filter(|i| i & cb != 0 && i & tb == 0) {
                for c in 0..d {
                    m.swap([i, c], [i | tb, c]);
                }
            }
            for r in 0..d {
                for j in (0..d).filter(|j| j & cb != 0 && j & tb == 0) {
                    m.swap([r, j], [r, j | tb]);
                }
            }
        }
    }
}

/// Stabilizer tableau of an `n`-qubit Clifford unitary.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CliffordTableau {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
    /// `true` when the row carries eigenvalue sign -1.
    negative: Vec<bool>,
}

impl CliffordTableau {
    pub fn identity(n: usize) -> Self {
        let x = (0..2 * n).map(|r| if r < n { 1u64 << r } else { 0 }).collect();
        let z = (0..2 * n).map(|r| if r >= n { 1u64 << (r - n) } else { 0 }).collect();
        Self {
            n,
            x,
            z,
            negative: vec![false; 2 * n],
        }
    }

    /// Builds a tableau from per-row bit masks, rejecting non-symplectic
    /// input.
    pub fn from_rows(n: usize, x: Vec<u64>, z: Vec<u64>, negative: Vec<bool>) -> Result<Self> {
        check_qubits(n, 1)?;
        if x.len() != 2 * n || z.len() != 2 * n || negative.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                found: x.len().min(z.len()).min(negative.len()),
            });
        }
        let mask = (1u64 << n) - 1;
        if x.iter().chain(z.iter()).any(|&r| r & !mask != 0) {
            return Err(invalid("row bits outside the register"));
        }
        let t = Self { n, x, z, negative };
        if !t.is_symplectic() {
            return Err(invalid("tableau rows are not a symplectic basis"));
        }
        Ok(t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `(x_bits, z_bits, negative)` for row `r`.
    pub fn row(&self, r: usize) -> (u64, u64, bool) {
        (self.x[r], self.z[r], self.negative[r])
    }

    /// Phase bit in the feature encoding: 1 for sign +1, 0 for sign -1.
    pub fn phase_bit(&self, r: usize) -> u8 {
        u8::from(!self.negative[r])
    }

    fn commutes(&self, a: usize, b: usize) -> bool {
        let s = (self.x[a] & self.z[b]) ^ (self.z[a] & self.x[b]);
        s.count_ones() % 2 == 0
    }

    /// Row `q` anticommutes with row `q + n` and commutes with every other row.
    pub fn is_symplectic(&self) -> bool {
        let n = self.n;
        (0..2 * n).all(|a| {
            (a + 1..2 * n).all(|b| {
                let partner = a < n && b == a + n;
                self.commutes(a, b) != partner
            })
        })
    }

    /// Updates the tableau of `U` to the tableau of `g U`.
    pub fn apply_gate(&mut self, g: Gate) {
        for r in 0..2 * self.n {
            let (x, z) = (self.x[r], self.z[r]);
            match g {
                Gate::H(q) => {
                    let (xq, zq) = (x >> q & 1, z >> q & 1);
                    self.negative[r] ^= xq & zq == 1;
                    let bit = 1 << q;
                    self.x[r] = (x & !bit) | (zq << q);
                    self.z[r] = (z & !bit) | (xq << q);
                }
                Gate::S(q) => {
                    let (xq, zq) = (x >> q & 1, z >> q & 1);
                    self.negative[r] ^= xq & zq == 1;
                    self.z[r] = z ^ (xq << q);
                }
                Gate::Cnot { control, target } => {
                    let (xa, za) = (x >> control & 1, z >> control & 1);
                    let (xb, zb) = (x >> target & 1, z >> target & 1);
                    self.negative[r] ^= xa & zb & (xb ^ za ^ 1) == 1;
                    self.x[r] = x ^ (xa << target);
                    self.z[r] = z ^ (zb << control);
                }
            }
        }
    }

    fn x_bit(&self, r: usize, q: usize) -> bool {
        self.x[r] >> q & 1 == 1
    }

    fn z_bit(&self, r: usize, q: usize) -> bool {
        self.z[r] >> q & 1 == 1
    }
}

/// All 24 single-qubit tableaus, found by brute force over every bit
/// pattern that passes the symplectic check.
pub fn single_qubit_cliffords() -> Vec<CliffordTableau> {
    (0u64..64)
        .filter_map(|bits| {
            let x = vec![bits & 1, bits >> 1 & 1];
            let z = vec![bits >> 2 & 1, bits >> 3 & 1];
            let neg = vec![bits >> 4 & 1 == 1, bits >> 5 & 1 == 1];
            CliffordTableau::from_rows(1, x, z, neg).ok()
        })
        .collect()
}

/// Draws a Clifford uniformly from the group modulo global phase.
pub fn sample_uniform_clifford<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<CliffordTableau> {
    check_qubits(n, 1)?;
    let rows = random_symplectic(n, rng);
    let mut x = vec![0u64; 2 * n];
    let mut z = vec![0u64; 2 * n];
    for q in 0..n {
        for (slot, v) in [(q, rows[2 * q]), (n + q, rows[2 * q + 1])] {
            for k in 0..n {
                x[slot] |= (v >> (2 * k) & 1) << k;
                z[slot] |= (v >> (2 * k + 1) & 1) << k;
            }
        }
    }
    let negative = (0..2 * n).map(|_| rng.random::<bool>()).collect();
    Ok(CliffordTableau { n, x, z, negative })
}

// Symplectic vectors are packed with x_k at bit 2k and z_k at bit 2k + 1.

fn symplectic_inner(v: u64, w: u64) -> bool {
    const EVEN: u64 = 0x5555_5555_5555_5555;
    let swapped = ((w & EVEN) << 1) | ((w >> 1) & EVEN);
    (v & swapped).count_ones() % 2 == 1
}

fn transvect(k: u64, v: u64) -> u64 {
    if symplectic_inner(k, v) {
        v ^ k
    } else {
        v
    }
}

fn pair(v: u64, i: usize) -> u64 {
    v >> (2 * i) & 3
}

/// `(h1, h2)` with `y = Z_h1 Z_h2 x`; a zero vector is the identity map.
fn find_transvection(x: u64, y: u64, n: usize) -> (u64, u64) {
    if x == y {
        return (0, 0);
    }
    if symplectic_inner(x, y) {
        return (x ^ y, 0);
    }
    for i in 0..n {
        let (xp, yp) = (pair(x, i), pair(y, i));
        if xp != 0 && yp != 0 {
            let mut zp = xp ^ yp;
            if zp == 0 {
                // Same nonzero pair; pick one that anticommutes with it.
                zp = 0b10;
                if xp & 1 != xp >> 1 {
                    zp |= 1;
                }
            }
            let zv = zp << (2 * i);
            return (x ^ zv, y ^ zv);
        }
    }
    let mut zv = 0u64;
    for i in 0..n {
        let (xp, yp) = (pair(x, i), pair(y, i));
        if xp != 0 && yp == 0 {
            let zp = if xp & 1 == xp >> 1 { 0b10 } else { ((xp & 1) << 1) | (xp >> 1) };
            zv |= zp << (2 * i);
            break;
        }
    }
    for i in 0..n {
        let (xp, yp) = (pair(x, i), pair(y, i));
        if xp == 0 && yp != 0 {
            let zp = if yp & 1 == yp >> 1 { 0b10 } else { ((yp & 1) << 1) | (yp >> 1) };
            zv |= zp << (2 * i);
            break;
        }
    }
    (x ^ zv, y ^ zv)
}

/// Rows of a uniformly random element of Sp(2n, 2); rows `2q`, `2q + 1`
/// form the q-th hyperbolic pair.
fn random_symplectic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u64> {
    let nn = 2 * n;
    let mut f1: u64 = rng.random_range(1..(1u64 << nn));
    let e1 = 1u64;
    let (t0, t1) = find_transvection(e1, f1, n);
    let bits: u64 = rng.random_range(0..(1u64 << (nn - 1)));
    let eprime = e1 | ((bits >> 1) << 2);
    let h0 = transvect(t1, transvect(t0, eprime));
    if bits & 1 == 1 {
        f1 = 0;
    }
    let mut g = vec![0b01u64, 0b10u64];
    if n > 1 {
        g.extend(random_symplectic(n - 1, rng).into_iter().map(|r| r << 2));
    }
    for row in g.iter_mut() {
        let mut v = *row;
        v = transvect(t0, v);
        v = transvect(t1, v);
        v = transvect(h0, v);
        v = transvect(f1, v);
        *row = v;
    }
    g
}

/// Decomposes a tableau into H, S and CNOT gates whose product reproduces
/// its conjugation action, signs included. Global phase is unconstrained.
pub fn tableau_to_circuit(t: &CliffordTableau) -> Result<CliffordCircuit> {
    if !t.is_symplectic() {
        return Err(invalid("cannot synthesize a non-symplectic tableau"));
    }
    let n = t.n;
    let mut work = t.clone();
    let mut reduction: Vec<Gate> = Vec::new();
    let mut push = |w: &mut CliffordTableau, g: Gate| {
        w.apply_gate(g);
        reduction.push(g);
    };

    for q in 0..n {
        // Put an X on the diagonal of destabilizer q.
        if !work.x_bit(q, q) {
            if let Some(j) = (q + 1..n).find(|&j| work.x_bit(q, j)) {
                swap_qubits(&mut work, &mut push, q, j);
            } else if let Some(j) = (q..n).find(|&j| work.z_bit(q, j)) {
                push(&mut work, Gate::H(j));
                if j != q {
                    swap_qubits(&mut work, &mut push, q, j);
                }
            }
        }
        // Clear the rest of destabilizer q.
        for j in q + 1..n {
            if work.x_bit(q, j) {
                push(&mut work, Gate::Cnot { control: q, target: j });
            }
        }
        if (q..n).any(|j| work.z_bit(q, j)) {
            if !work.z_bit(q, q) {
                push(&mut work, Gate::S(q));
            }
            for j in q + 1..n {
                if work.z_bit(q, j) {
                    push(&mut work, Gate::Cnot { control: j, target: q });
                }
            }
            push(&mut work, Gate::S(q));
        }
        // Clear stabilizer q.
        let s = n + q;
        for j in q + 1..n {
            if work.z_bit(s, j) {
                push(&mut work, Gate::Cnot { control: j, target: q });
            }
        }
        if (q..n).any(|j| work.x_bit(s, j)) {
            push(&mut work, Gate::H(q));
            for j in q + 1..n {
                if work.x_bit(s, j) {
                    push(&mut work, Gate::Cnot { control: q, target: j });
                }
            }
            if work.z_bit(s, q) {
                push(&mut work, Gate::S(q));
            }
            push(&mut work, Gate::H(q));
        }
    }
    for q in 0..n {
        if work.negative[q] {
            // Z = S S flips the sign of X_q only.
            push(&mut work, Gate::S(q));
            push(&mut work, Gate::S(q));
        }
        if work.negative[n + q] {
            // X = H S S H flips the sign of Z_q only.
            for g in [Gate::H(q), Gate::S(q), Gate::S(q), Gate::H(q)] {
                push(&mut work, g);
            }
        }
    }
    debug_assert_eq!(work, CliffordTableau::identity(n));

    // reduction · U = I, so U is the reversed sequence of inverses.
    let mut gates = Vec::with_capacity(reduction.len());
    for g in reduction.into_iter().rev() {
        match g {
            Gate::S(q) => gates.extend([Gate::S(q); 3]),
            other => gates.push(other),
        }
    }
    CliffordCircuit::new(n, gates)
}

fn swap_qubits(w: &mut CliffordTableau, push: &mut impl FnMut(&mut CliffordTableau, Gate), a: usize, b: usize) {
    push(w, Gate::Cnot { control: a, target: b });
    push(w, Gate::Cnot { control: b, target: a });
    push(w, Gate::Cnot { control: a, target: b });
}

/// `U rho U^dagger` for the unitary described by `t`.
pub fn apply_clifford<T: Real>(t: &CliffordTableau, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>> {
    if t.n() != rho.n() {
        return Err(Error::DimensionMismatch {
            expected: 1 << t.n(),
            found: rho.dim(),
        });
    }
    let circuit = tableau_to_circuit(t)?;
    let mut m = rho.data().clone();
    circuit.apply_to_matrix(&mut m);
    Ok(DensityMatrix::from_matrix_unchecked(rho.n(), m))
}

/// Flattens a tableau and measurement outcome into `n(2n+3)` symbols:
/// per row the Pauli letters (`I=0, X=1, Y=2, Z=3`) then the phase bit,
/// followed by the outcome bits.
pub fn encode_tableau(t: &CliffordTableau, outcome: &[u8]) -> Result<Vec<i8>> {
    let n = t.n();
    if outcome.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: outcome.len(),
        });
    }
    let mut out = Vec::with_capacity(n * (2 * n + 3));
    for r in 0..2 * n {
        for q in 0..n {
            out.push(match (t.x_bit(r, q), t.z_bit(r, q)) {
                (false, false) => 0,
                (true, false) => 1,
                (true, true) => 2,
                (false, true) => 3,
            });
        }
        out.push(t.phase_bit(r) as i8);
    }
    for &b in outcome {
        if b > 1 {
            return Err(invalid(format!("outcome bit {b} is not 0 or 1")));
        }
        out.push(b as i8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;
    use std::collections::HashSet;

    type M = Array2<C<f64>>;

    fn kron(a: &M, b: &M) -> M {
        let (ra, ca) = a.dim();
        let (rb, cb) = b.dim();
        Array2::from_shape_fn((ra * rb, ca * cb), |(r, c)| a[[r / rb, c / cb]] * b[[r % rb, c % cb]])
    }

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    /// Dense Hermitian Pauli for a tableau-style row, qubit 0 least significant.
    fn pauli_matrix(n: usize, x: u64, z: u64, negative: bool) -> M {
        let i2 = ndarray::arr2(&[[c(1., 0.), c(0., 0.)], [c(0., 0.), c(1., 0.)]]);
        let px = ndarray::arr2(&[[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]);
        let py = ndarray::arr2(&[[c(0., 0.), c(0., -1.)], [c(0., 1.), c(0., 0.)]]);
        let pz = ndarray::arr2(&[[c(1., 0.), c(0., 0.)], [c(0., 0.), c(-1., 0.)]]);
        let mut m = ndarray::arr2(&[[c(1., 0.)]]);
        for q in (0..n).rev() {
            let f = match (x >> q & 1, z >> q & 1) {
                (0, 0) => &i2,
                (1, 0) => &px,
                (1, 1) => &py,
                _ => &pz,
            };
            m = kron(&m, f);
        }
        if negative {
            m.mapv_inplace(|v| -v);
        }
        m
    }

    fn max_dev(a: &M, b: &M) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn dagger(m: &M) -> M {
        m.t().mapv(|v| v.conj())
    }

    fn assert_circuit_matches(t: &CliffordTableau) {
        let n = t.n();
        let circ = tableau_to_circuit(t).unwrap();
        let u = circ.unitary::<f64>();
        let ud = dagger(&u);
        for r in 0..2 * n {
            let (xi, zi) = if r < n { (1u64 << r, 0) } else { (0, 1u64 << (r - n)) };
            let p_in = pauli_matrix(n, xi, zi, false);
            let (x, z, neg) = t.row(r);
            let expect = pauli_matrix(n, x, z, neg);
            let got = u.dot(&p_in).dot(&ud);
            assert!(max_dev(&got, &expect) < 1e-12, "row {r} of {t:?}");
        }
    }

    fn all_single_qubit_tableaus() -> Vec<CliffordTableau> {
        single_qubit_cliffords()
    }

    #[test]
    fn single_qubit_group_has_24_elements() {
        assert_eq!(all_single_qubit_tableaus().len(), 24);
    }

    #[test]
    fn identity_and_hadamard_synthesis() {
        let id = CliffordTableau::identity(3);
        assert!(tableau_to_circuit(&id).unwrap().gates().is_empty());

        let mut h = CliffordTableau::identity(1);
        h.apply_gate(Gate::H(0));
        let u = tableau_to_circuit(&h).unwrap().unitary::<f64>();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let hm = ndarray::arr2(&[[c(s, 0.), c(s, 0.)], [c(s, 0.), c(-s, 0.)]]);
        // Equal up to a global phase.
        let phase = u[[0, 0]] / hm[[0, 0]];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_dev(&u, &hm.mapv(|v| v * phase)) < 1e-12);
    }

    #[test]
    fn random_tableaus_are_symplectic_and_synthesize_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 1..=3 {
            for _ in 0..1000 {
                let t = sample_uniform_clifford(n, &mut rng).unwrap();
                assert!(t.is_symplectic());
                assert_circuit_matches(&t);
            }
        }
        for n in 4..=8 {
            for _ in 0..20 {
                let t = sample_uniform_clifford(n, &mut rng).unwrap();
                assert!(t.is_symplectic());
            }
        }
        for _ in 0..5 {
            assert_circuit_matches(&sample_uniform_clifford(5, &mut rng).unwrap());
        }
    }

    #[test]
    fn single_qubit_sampling_is_uniform() {
        let classes = all_single_qubit_tableaus();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000;
        let mut counts: HashMap<CliffordTableau, usize> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(sample_uniform_clifford(1, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        let expected = draws as f64 / 24.0;
        let mut chi2 = 0.0;
        for t in &classes {
            let k = counts[t] as f64;
            assert!((k / draws as f64 - 1.0 / 24.0).abs() < 0.01);
            chi2 += (k - expected).powi(2) / expected;
        }
        // chi-square(23) upper 0.1% point.
        assert!(chi2 < 49.73, "chi2 = {chi2}");
    }

    #[test]
    fn two_qubit_sampling_covers_the_group() {
        // |Cl_2| / U(1) = 2^4 * |Sp(4,2)| = 16 * 720 = 11520; with 1e5 draws
        // the expected number of unseen elements is 11520 e^{-8.68} ≈ 2.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let seen: HashSet<CliffordTableau> = (0..100_000)
            .map(|_| sample_uniform_clifford(2, &mut rng).unwrap())
            .collect();
        assert!(seen.len() <= 11520);
        assert!(seen.len() >= 11500, "distinct = {}", seen.len());
    }

    #[test]
    fn non_symplectic_rejected() {
        assert!(CliffordTableau::from_rows(1, vec![1, 1], vec![0, 0], vec![false, false]).is_err());
    }

    #[test]
    fn apply_clifford_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = crate::qcore::sample_hilbert_schmidt::<f64, _>(3, &mut rng).unwrap();
        let same = apply_clifford(&CliffordTableau::identity(3), &rho).unwrap();
        assert!(max_dev(same.data(), rho.data()) < 1e-15);

        for _ in 0..10 {
            let t = sample_uniform_clifford(3, &mut rng).unwrap();
            let out = apply_clifford(&t, &rho).unwrap();
            assert!((out.trace().re - 1.0).abs() < 1e-10);
            let u = tableau_to_circuit(&t).unwrap().unitary::<f64>();
            let dense = u.dot(rho.data()).dot(&dagger(&u));
            assert!(max_dev(out.data(), &dense) < 1e-12);
        }

        let mut h = CliffordTableau::identity(1);
        h.apply_gate(Gate::H(0));
        let zero = crate::qcore::PureState::<f64>::basis(1, 0).unwrap().to_density();
        let plus = apply_clifford(&h, &zero).unwrap();
        for v in plus.data() {
            assert!((v.re - 0.5).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        assert!(apply_clifford(&h, &rho).is_err());
    }

    #[test]
    fn tableau_encoding() {
        let id = CliffordTableau::identity(1);
        assert_eq!(encode_tableau(&id, &[0]).unwrap(), vec![1, 1, 3, 1, 0]);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_uniform_clifford(3, &mut rng).unwrap();
        let v = encode_tableau(&t, &[1, 0, 1]).unwrap();
        assert_eq!(v.len(), 27);
        assert!(v.iter().all(|&e| (0..=3).contains(&e)));
        assert!(encode_tableau(&t, &[1, 0]).is_err());
    }

    #[test]
    fn tableau_encoding_is_injective_on_single_qubit() {
        let mut seen = HashSet::new();
        for t in all_single_qubit_tableaus() {
            for b in 0..2u8 {
                assert!(seen.insert(encode_tableau(&t, &[b]).unwrap()));
            }
        }
        assert_eq!(seen.len(), 48);
    }
}
