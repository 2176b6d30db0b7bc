//! Baseline shadow estimators for GHZ fidelity and the swap functional.

use ndarray::Array2;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::qcore::{Bipartition, DensityMatrix, hermitian_trace_product, reduced_projector};
use crate::scalar::{Real, C};
use crate::shadows::{
    check_homogeneous, measure_pauli, outcome_distribution, Axis, Basis, BitFlipNoise, MeasurementRecord,
    PauliBasis, Snapshot,
};

/// One DFE round and its score.
#[derive(Clone, Debug, PartialEq)]
pub struct DfeSample<T: Real> {
    pub record: MeasurementRecord,
    /// Always `+3/4` or `-3/4`.
    pub score: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfeEstimate<T: Real> {
    /// Mean score plus 1/4.
    pub f_hat: T,
    pub samples: Vec<DfeSample<T>>,
}

impl<T: Real> DfeEstimate<T> {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &MeasurementRecord> {
        self.samples.iter().map(|s| &s.record)
    }
}

/// Probability of the computational-basis branch in the default policy.
pub const DFE_Z_PROBABILITY: f64 = 1.0 / 3.0;

/// Basis of one DFE round: all-Z with probability 1/3, otherwise a random
/// X/Y string with an even number of Y.
pub fn dfe_basis<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PauliBasis> {
    if rng.random_bool(DFE_Z_PROBABILITY) {
        return PauliBasis::new(vec![Axis::Z; n]);
    }
    let mut axes: Vec<Axis> = (0..n.saturating_sub(1))
        .map(|_| if rng.random::<bool>() { Axis::Y } else { Axis::X })
        .collect();
    let ys = axes.iter().filter(|&&a| a == Axis::Y).count();
    axes.push(if ys % 2 == 1 { Axis::Y } else { Axis::X });
    PauliBasis::new(axes)
}

/// Score of a DFE round, inferred from its basis.
pub fn dfe_score<T: Real>(record: &MeasurementRecord) -> Result<T> {
    let Basis::Pauli(pb) = record.basis() else {
        return Err(invalid("DFE scores need Pauli records"));
    };
    let axes = pb.axes();
    let ones = record.outcome().iter().filter(|&&b| b == 1).count();
    let quarter3 = T::lit(0.75);
    if axes.iter().all(|&a| a == Axis::Z) {
        let hit = ones == 0 || ones == record.n();
        return Ok(if hit { quarter3 } else { -quarter3 });
    }
    if axes.contains(&Axis::Z) {
        return Err(invalid("basis mixes Z with X/Y; not a DFE setting"));
    }
    let ys = axes.iter().filter(|&&a| a == Axis::Y).count();
    if ys % 2 == 1 {
        return Err(invalid("odd number of Y axes; not a DFE setting"));
    }
    Ok(if (ys / 2 + ones) % 2 == 0 { quarter3 } else { -quarter3 })
}

/// Direct fidelity estimate against the GHZ state from `n_rounds` rounds.
pub fn dfe_ghz<T: Real, R: Rng + ?Sized>(
    rho: &DensityMatrix<T>,
    n_rounds: usize,
    noise: Option<&BitFlipNoise>,
    rng: &mut R,
) -> Result<DfeEstimate<T>> {
    if n_rounds < 1 {
        return Err(invalid("DFE needs at least one round"));
    }
    let mut samples = Vec::with_capacity(n_rounds);
    let mut sum = T::zero();
    for _ in 0..n_rounds {
        let basis = dfe_basis(rho.n(), rng)?;
        let record = measure_pauli(rho, &basis, noise, rng)?;
        let score = dfe_score(&record)?;
        sum += score;
        samples.push(DfeSample { record, score });
    }
    Ok(DfeEstimate {
        f_hat: sum / T::from_count(n_rounds) + T::lit(0.25),
        samples,
    })
}

/// Single-round variance `(1 + 2f)(1 - f) / 2` of the DFE score.
pub fn dfe_variance(f: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(invalid(format!("fidelity {f} outside [0, 1]")));
    }
    Ok((1.0 + 2.0 * f) * (1.0 - f) / 2.0)
}

/// Exact first and second moments of the score in each branch.
#[derive(Clone, Copy, Debug)]
struct BranchMoments {
    z_mean: f64,
    z_sq: f64,
    xy_mean: f64,
    xy_sq: f64,
}

fn branch_moments<T: Real>(rho: &DensityMatrix<T>) -> Result<BranchMoments> {
    let n = rho.n();
    let moments = |axes: Vec<Axis>| -> Result<(f64, f64)> {
        let basis = Basis::Pauli(PauliBasis::new(axes)?);
        let probs = outcome_distribution(rho, &basis)?;
        let (mut m1, mut m2) = (0.0, 0.0);
        for (idx, p) in probs.iter().enumerate() {
            let bits = (0..n).map(|q| (idx >> q & 1) as u8).collect();
            let s: f64 = dfe_score::<T>(&MeasurementRecord::new(basis.clone(), bits)?)?.as_f64();
            m1 += p.as_f64() * s;
            m2 += p.as_f64() * s * s;
        }
        Ok((m1, m2))
    };
    let (z_mean, z_sq) = moments(vec![Axis::Z; n])?;
    // The X/Y branch is uniform over the 2^(n-1) strings with even Y count.
    let (mut xy_mean, mut xy_sq, mut count) = (0.0, 0.0, 0usize);
    for mask in 0..1usize << n {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        let axes = (0..n).map(|q| if mask >> q & 1 == 1 { Axis::Y } else { Axis::X }).collect();
        let (m1, m2) = moments(axes)?;
        xy_mean += m1;
        xy_sq += m2;
        count += 1;
    }
    Ok(BranchMoments {
        z_mean,
        z_sq,
        xy_mean: xy_mean / count as f64,
        xy_sq: xy_sq / count as f64,
    })
}

/// Exact `E[F_hat]` over both branches and all outcomes.
pub fn dfe_expectation<T: Real>(rho: &DensityMatrix<T>) -> Result<f64> {
    let m = branch_moments(rho)?;
    let p = DFE_Z_PROBABILITY;
    Ok(p * m.z_mean + (1.0 - p) * m.xy_mean + 0.25)
}

/// Exact single-round variance of the reweighted score when the Z branch is
/// chosen with probability `q` instead of 1/3, for every `q` in `q_grid`.
pub fn verify_local_optimality<T: Real>(rho: &DensityMatrix<T>, q_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let m = branch_moments(rho)?;
    let p = DFE_Z_PROBABILITY;
    let mu = p * m.z_mean + (1.0 - p) * m.xy_mean;
    q_grid
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(invalid(format!("branch probability {q} outside (0, 1)")));
            }
            let second = p * p / q * m.z_sq + (1.0 - p) * (1.0 - p) / (1.0 - q) * m.xy_sq;
            Ok((q, second - mu * mu))
        })
        .collect()
}

/// `tr(snapshot_k snapshot_l)` on one qubit of two Pauli records.
pub fn pauli_pair_trace<T: Real>(axis_k: Axis, bit_k: u8, axis_l: Axis, bit_l: u8) -> T {
    match (axis_k == axis_l, bit_k == bit_l) {
        (true, true) => T::lit(5.0),
        (true, false) => T::lit(-4.0),
        (false, _) => T::lit(0.5),
    }
}

/// U-statistic estimate of `tr((rho ⊗ rho) S_A) = tr(rho_A^2)`.
///
/// Pair terms are sorted before summation so the result is bit-identical
/// under any reordering of `records`.
pub fn renyi_estimate<T: Real>(records: &[MeasurementRecord], subsystem_a: &[usize]) -> Result<T> {
    let n_rec = records.len();
    if n_rec < 2 {
        return Err(invalid("the swap estimator needs at least two records"));
    }
    check_homogeneous(records)?;
    let n = records[0].n();
    let a = crate::qcore::normalize_subsystem(n, subsystem_a)?;
    let mut pairs: Vec<T> = Vec::with_capacity(n_rec * (n_rec - 1) / 2);
    match records[0].basis() {
        Basis::Pauli(_) => {
            let local: Vec<Vec<(Axis, u8)>> = records
                .iter()
                .map(|r| match r.basis() {
                    Basis::Pauli(pb) => a.iter().map(|&q| (pb.axes()[q], r.outcome()[q])).collect(),
                    Basis::Clifford(_) => unreachable!("homogeneous records"),
                })
                .collect();
            for k in 0..n_rec {
                for l in k + 1..n_rec {
                    let v = local[k]
                        .iter()
                        .zip(&local[l])
                        .fold(T::one(), |acc, (&(ak, bk), &(al, bl))| acc * pauli_pair_trace::<T>(ak, bk, al, bl));
                    pairs.push(v);
                }
            }
        }
        Basis::Clifford(_) => {
            let part = Bipartition::new(n, &a)?;
            let dim_b = T::from_count(1 << (n - a.len()));
            let w = T::from_count((1 << n) + 1);
            let reduced: Vec<Array2<C<T>>> = records
                .iter()
                .map(|r| {
                    let Snapshot::Clifford { phi } = Snapshot::<T>::from_record(r)? else {
                        unreachable!("homogeneous records")
                    };
                    let mut m = reduced_projector(&phi, &part);
                    m.mapv_inplace(|z| z.scale(w));
                    for i in 0..m.nrows() {
                        m[[i, i]].re -= dim_b;
                    }
                    Ok(m)
                })
                .collect::<Result<_, Error>>()?;
            for k in 0..n_rec {
                for l in k + 1..n_rec {
                    pairs.push(hermitian_trace_product(&reduced[k], &reduced[l]));
                }
            }
        }
    }
    pairs.sort_by(|x, y| x.as_f64().total_cmp(&y.as_f64()));
    let sum = pairs.into_iter().fold(T::zero(), |acc, v| acc + v);
    Ok(T::lit(2.0) * sum / T::from_count(n_rec * (n_rec - 1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::sample_uniform_clifford;
    use crate::qcore::{depolarize, fidelity_with_pure, ghz_state, sample_hilbert_schmidt, swap_functional};
    use crate::shadows::{measure, pauli_snapshot_factor, Ensemble};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(axes: &[Axis], bits: &[u8]) -> MeasurementRecord {
        MeasurementRecord::new(Basis::Pauli(PauliBasis::new(axes.to_vec()).unwrap()), bits.to_vec()).unwrap()
    }

    #[test]
    fn score_examples() {
        let z = [Axis::Z; 3];
        assert_eq!(dfe_score::<f64>(&rec(&z, &[0, 0, 0])).unwrap(), 0.75);
        assert_eq!(dfe_score::<f64>(&rec(&z, &[1, 1, 1])).unwrap(), 0.75);
        assert_eq!(dfe_score::<f64>(&rec(&z, &[1, 0, 1])).unwrap(), -0.75);
        // Two Y and one outcome bit set: exponent 1 + 1.
        let p = [Axis::X, Axis::Y, Axis::Y];
        assert_eq!(dfe_score::<f64>(&rec(&p, &[1, 0, 0])).unwrap(), 0.75);
        assert_eq!(dfe_score::<f64>(&rec(&p, &[0, 0, 0])).unwrap(), -0.75);
        assert!(dfe_score::<f64>(&rec(&[Axis::X, Axis::Y, Axis::X], &[0, 0, 0])).is_err());
        assert!(dfe_score::<f64>(&rec(&[Axis::X, Axis::Z, Axis::X], &[0, 0, 0])).is_err());
    }

    #[test]
    fn dfe_bases_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut z = 0;
        for _ in 0..30_000 {
            let b = dfe_basis(4, &mut rng).unwrap();
            if b.axes().iter().all(|&a| a == Axis::Z) {
                z += 1;
            } else {
                assert_eq!(b.axes().iter().filter(|&&a| a == Axis::Y).count() % 2, 0);
                assert!(!b.axes().contains(&Axis::Z));
            }
        }
        assert!((z as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn dfe_exactly_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            let psi = ghz_state::<f64>(n).unwrap();
            for _ in 0..20 {
                let lam: f64 = rng.random::<f64>();
                let rho = depolarize(&psi, lam).unwrap();
                let f = fidelity_with_pure(&rho, &psi).unwrap();
                assert!((dfe_expectation(&rho).unwrap() - f).abs() < 1e-10);
            }
            // Non-GHZ-diagonal input too.
            let rho = sample_hilbert_schmidt::<f64, _>(n, &mut rng).unwrap();
            let f = fidelity_with_pure(&rho, &psi).unwrap();
            assert!((dfe_expectation(&rho).unwrap() - f).abs() < 1e-10);
        }
    }

    #[test]
    fn dfe_pure_ghz_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = ghz_state::<f64>(3).unwrap().to_density();
        let est = dfe_ghz(&rho, 2000, None, &mut rng).unwrap();
        assert_eq!(est.n(), 2000);
        assert!(est.samples.iter().all(|s| s.score == 0.75));
        assert!((est.f_hat - 1.0).abs() < 1e-12);
        assert!(dfe_ghz(&rho, 0, None, &mut rng).is_err());
    }

    #[test]
    fn variance_formula() {
        assert_eq!(dfe_variance(1.0).unwrap(), 0.0);
        assert!((dfe_variance(0.25).unwrap() - 9.0 / 16.0).abs() < 1e-15);
        assert!((dfe_variance(0.93).unwrap() - 0.1001).abs() < 1e-12);
        assert!(dfe_variance(1.1).is_err());
    }

    #[test]
    fn empirical_variance_at_093() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = ghz_state::<f64>(3).unwrap();
        // f = 1 - lambda (1 - 1/8) = 0.93
        let rho = depolarize(&psi, 0.08).unwrap();
        let est = dfe_ghz(&rho, 100_000, None, &mut rng).unwrap();
        let xs: Vec<f64> = est.samples.iter().map(|s| s.score).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((v - 0.1001).abs() < 0.005, "{v}");
    }

    #[test]
    fn local_optimality() {
        let psi = ghz_state::<f64>(2).unwrap();
        let rho = depolarize(&psi, 0.05).unwrap();
        let table = verify_local_optimality(&rho, &[0.2, 1.0 / 3.0, 0.5]).unwrap();
        let best = table.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(best.0, 1.0 / 3.0);
        assert!(table[0].1 > table[1].1);
        let f = fidelity_with_pure(&rho, &psi).unwrap();
        assert!((table[1].1 - dfe_variance(f).unwrap()).abs() < 1e-12);
        assert!(verify_local_optimality(&rho, &[0.0]).is_err());
        assert!(verify_local_optimality(&rho, &[1.0]).is_err());
    }

    #[test]
    fn pair_table_matches_dense_traces() {
        for ak in Axis::ALL {
            for bk in 0..2 {
                for al in Axis::ALL {
                    for bl in 0..2 {
                        let x = pauli_snapshot_factor::<f64>(ak, bk);
                        let y = pauli_snapshot_factor::<f64>(al, bl);
                        let tr = x.dot(&y).diag().iter().sum::<C<f64>>();
                        let t: f64 = pauli_pair_trace(ak, bk, al, bl);
                        assert!((tr.re - t).abs() < 1e-12 && tr.im.abs() < 1e-12);
                    }
                }
            }
        }
        assert_eq!(pauli_pair_trace::<f64>(Axis::Z, 0, Axis::Z, 0), 5.0);
        assert_eq!(pauli_pair_trace::<f64>(Axis::Z, 0, Axis::Z, 1), -4.0);
        assert_eq!(pauli_pair_trace::<f64>(Axis::Z, 0, Axis::X, 1), 0.5);
    }

    #[test]
    fn renyi_degenerate_pair() {
        let r = rec(&[Axis::X, Axis::Z], &[1, 0]);
        assert_eq!(renyi_estimate::<f64>(&[r.clone(), r.clone()], &[0]).unwrap(), 5.0);
        assert!(renyi_estimate::<f64>(&[r], &[0]).is_err());
    }

    #[test]
    fn renyi_matches_dense_pair_traces() {
        // tr((X ⊗ Y) S_A) = tr(tr_B X · tr_B Y) computed from dense snapshots.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = sample_hilbert_schmidt::<f64, _>(3, &mut rng).unwrap();
        let a = [0usize, 2];
        for ens in [Ensemble::Pauli, Ensemble::Clifford] {
            let recs: Vec<_> = (0..6)
                .map(|_| measure(&rho, Basis::random(ens, 3, &mut rng).unwrap(), None, &mut rng).unwrap())
                .collect();
            let part = Bipartition::new(3, &a).unwrap();
            let dense: Vec<_> = recs
                .iter()
                .map(|r| {
                    let s = Snapshot::<f64>::from_record(r).unwrap().to_dense();
                    crate::qcore::partial_trace_raw(&s, &part)
                })
                .collect();
            let mut acc = 0.0;
            for k in 0..6 {
                for l in 0..6 {
                    if k != l {
                        acc += dense[k].dot(&dense[l]).diag().iter().sum::<C<f64>>().re;
                    }
                }
            }
            let want = acc / 30.0;
            let got: f64 = renyi_estimate(&recs, &a).unwrap();
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{ens:?}: {got} vs {want}");
        }
    }

    #[test]
    fn renyi_permutation_invariant_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = sample_hilbert_schmidt::<f64, _>(3, &mut rng).unwrap();
        for ens in [Ensemble::Pauli, Ensemble::Clifford] {
            let mut recs: Vec<_> = (0..40)
                .map(|_| measure(&rho, Basis::random(ens, 3, &mut rng).unwrap(), None, &mut rng).unwrap())
                .collect();
            let base: f64 = renyi_estimate(&recs, &[1]).unwrap();
            for _ in 0..10 {
                recs.shuffle(&mut rng);
                assert_eq!(renyi_estimate::<f64>(&recs, &[1]).unwrap().to_bits(), base.to_bits());
            }
        }
    }

    #[test]
    fn renyi_ghz_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = ghz_state::<f64>(2).unwrap().to_density();
        let reps = 30;
        let mut pauli = 0.0;
        let mut cliff = 0.0;
        for _ in 0..reps {
            let pr: Vec<_> = (0..500)
                .map(|_| measure(&rho, Basis::random(Ensemble::Pauli, 2, &mut rng).unwrap(), None, &mut rng).unwrap())
                .collect();
            pauli += renyi_estimate::<f64>(&pr, &[0]).unwrap() / reps as f64;
            let cr: Vec<_> = (0..500)
                .map(|_| {
                    let t = sample_uniform_clifford(2, &mut rng).unwrap();
                    measure(&rho, Basis::Clifford(t), None, &mut rng).unwrap()
                })
                .collect();
            cliff += renyi_estimate::<f64>(&cr, &[0]).unwrap() / reps as f64;
        }
        let truth = swap_functional(&rho, &[0]).unwrap();
        assert!((truth - 0.5).abs() < 1e-12);
        assert!((pauli - truth).abs() < 0.05, "{pauli}");
        assert!((cliff - truth).abs() < 0.05, "{cliff}");
    }
}
