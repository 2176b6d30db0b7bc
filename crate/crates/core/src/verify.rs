//! Self-check suite run by `shadowbayes verify`.
//!
//! Each check reports what it measured next to the bound it was held to.

use std::fmt;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clifford::single_qubit_cliffords;
use crate::encoding::{build_feature_matrix, Standardization};
use crate::error::{Error, Result};
use crate::estimators::{dfe_ghz, dfe_variance, pauli_pair_trace, renyi_estimate, verify_local_optimality};
use crate::neural::{calibrate, NetConfig, SetTransformerParams};
use crate::pipeline::dfe_theory_variance;
use crate::qcore::{depolarize, ghz_state, sample_hilbert_schmidt, DensityMatrix};
use crate::scalar::C;
use crate::shadows::{
    apply_bitflip, invert_bitflip, measure, outcome_distribution, pauli_snapshot_factor, Axis, Basis, Ensemble,
    MeasurementRecord, PauliBasis, Snapshot,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub measured: String,
    pub bound: String,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {} (bound: {})", self.name, self.measured, self.bound)
    }
}

fn check(name: &str, measured: String, bound: String, passed: bool) -> CheckResult {
    CheckResult {
        name: name.into(),
        measured,
        bound,
        passed,
    }
}

fn bits_of(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| (index >> q & 1) as u8).collect()
}

/// Exact average snapshot over every basis and outcome.
pub fn enumerated_mean_snapshot(rho: &DensityMatrix<f64>, ensemble: Ensemble) -> Result<Array2<C<f64>>> {
    let n = rho.n();
    let bases: Vec<Basis> = match ensemble {
        Ensemble::Pauli => (0..3usize.pow(n as u32))
            .map(|mut code| {
                let axes = (0..n)
                    .map(|_| {
                        let a = Axis::ALL[code % 3];
                        code /= 3;
                        a
                    })
                    .collect();
                PauliBasis::new(axes).map(Basis::Pauli)
            })
            .collect::<Result<_>>()?,
        Ensemble::Clifford if n == 1 => single_qubit_cliffords().into_iter().map(Basis::Clifford).collect(),
        Ensemble::Clifford => return Err(crate::error::invalid("Clifford enumeration is limited to n = 1")),
    };
    let weight = 1.0 / bases.len() as f64;
    let mut acc = Array2::zeros((rho.dim(), rho.dim()));
    for basis in bases {
        let probs = outcome_distribution(rho, &basis)?;
        for (b, p) in probs.iter().enumerate() {
            let rec = MeasurementRecord::new(basis.clone(), bits_of(b, n))?;
            acc.scaled_add(C::new(p * weight, 0.0), &Snapshot::<f64>::from_record(&rec)?.to_dense());
        }
    }
    Ok(acc)
}

fn snapshot_unbiasedness(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for (ensemble, n) in [(Ensemble::Pauli, 1), (Ensemble::Pauli, 2), (Ensemble::Clifford, 1)] {
        for _ in 0..10 {
            let rho = sample_hilbert_schmidt::<f64, _>(n, rng)?;
            let mean = enumerated_mean_snapshot(&rho, ensemble)?;
            let err = (&mean - rho.data()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    Ok(check(
        "snapshot unbiasedness (exact enumeration)",
        format!("max |E[snapshot] - rho| = {worst:.2e}"),
        "1e-10".into(),
        worst < 1e-10,
    ))
}

fn variance_law(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let rounds = 20_000;
    let mut out = Vec::new();
    let shrink = 1.0 - 1.0 / 8.0;
    for f in [0.92, 0.95, 0.98, 1.0] {
        let rho = depolarize(&ghz_state::<f64>(3)?, (1.0 - f) / shrink)?;
        let est = dfe_ghz(&rho, rounds, None, rng)?;
        let scores: Vec<f64> = est.samples.iter().map(|s| s.score).collect();
        let m = scores.iter().sum::<f64>() / rounds as f64;
        let var = scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (rounds - 1) as f64;
        let m4 = scores.iter().map(|s| (s - m).powi(4)).sum::<f64>() / rounds as f64;
        let se = ((m4 - var * var).max(0.0) / rounds as f64).sqrt();
        let theory = dfe_variance(f)?;
        let passed = if f == 1.0 {
            scores.iter().all(|&s| s == 0.75)
        } else {
            (var - theory).abs() <= 5.0 * se
        };
        out.push(check(
            &format!("DFE variance law at f = {f}"),
            format!("empirical {var:.5} vs (1+2f)(1-f)/2 = {theory:.5}"),
            format!("5 SE = {:.1e}", 5.0 * se),
            passed,
        ));
    }
    Ok(out)
}

fn optimality_grid(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let grid = [0.1, 0.2, 1.0 / 3.0, 0.5, 0.7];
    let mut argmins = Vec::new();
    for _ in 0..10 {
        let lambda = rand::Rng::random_range(rng, 0.0..0.1);
        let rho = depolarize(&ghz_state::<f64>(2)?, lambda)?;
        let vars = verify_local_optimality(&rho, &grid)?;
        let best = vars.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|v| v.0).unwrap_or(f64::NAN);
        argmins.push(best);
    }
    let passed = argmins.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-12);
    Ok(check(
        "Z-branch reweighting grid",
        format!("argmin = {:.4} over {} states", argmins[0], argmins.len()),
        "argmin = 1/3 for every state".into(),
        passed,
    ))
}

fn bitflip_round_trip(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let rho = sample_hilbert_schmidt::<f64, _>(2, rng)?;
    let p = outcome_distribution(&rho, &Basis::random(Ensemble::Pauli, 2, rng)?)?;
    let back = invert_bitflip(&apply_bitflip(&p, 0.1)?, 0.1)?;
    let err = p.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let singular = matches!(invert_bitflip(&p, 0.5), Err(Error::SingularNoise(_)));
    Ok(vec![
        check(
            "bit-flip inversion at lambda = 0.1",
            format!("max error {err:.2e}"),
            "1e-12".into(),
            err < 1e-12,
        ),
        check(
            "bit-flip inversion at lambda = 0.5",
            if singular { "singular-noise error" } else { "no error" }.into(),
            "must be rejected".into(),
            singular,
        ),
    ])
}

fn pair_table() -> CheckResult {
    let mut worst = 0.0f64;
    for ak in Axis::ALL {
        for al in Axis::ALL {
            for bk in 0..2u8 {
                for bl in 0..2u8 {
                    let x = pauli_snapshot_factor::<f64>(ak, bk);
                    let y = pauli_snapshot_factor::<f64>(al, bl);
                    let dense = x.dot(&y).diag().iter().map(|z| z.re).sum::<f64>();
                    worst = worst.max((dense - pauli_pair_trace::<f64>(ak, bk, al, bl)).abs());
                }
            }
        }
    }
    check(
        "single-qubit snapshot pair traces (36 cases)",
        format!("max deviation {worst:.1e}"),
        "1e-12".into(),
        worst < 1e-12,
    )
}

fn permutation_invariance(rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let rho = depolarize(&ghz_state::<f64>(2)?, 0.05)?;
    let mut records = (0..30)
        .map(|_| {
            let b = Basis::random(Ensemble::Pauli, 2, rng)?;
            measure(&rho, b, None, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let base = renyi_estimate::<f64>(&records, &[0])?;
    let net = NetConfig::new(2, 16, 4, 4, Standardization::for_ensemble(Ensemble::Pauli))?;
    let params = SetTransformerParams::<f64>::init(&net, rng)?;
    let out0 = params.forward(&build_feature_matrix(&records, 30, Ensemble::Pauli, 2)?)?;
    let (mut renyi_dev, mut net_dev) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        records.shuffle(rng);
        renyi_dev = renyi_dev.max((renyi_estimate::<f64>(&records, &[0])? - base).abs());
        let out = params.forward(&build_feature_matrix(&records, 30, Ensemble::Pauli, 2)?)?;
        net_dev = net_dev.max((out - out0).abs());
    }
    Ok(vec![
        check(
            "purity estimate under record shuffles",
            format!("max change {renyi_dev:.1e}"),
            "0 (bit-exact)".into(),
            renyi_dev == 0.0,
        ),
        check(
            "network output under record shuffles",
            format!("max change {net_dev:.1e}"),
            "1e-9".into(),
            net_dev < 1e-9,
        ),
    ])
}

fn calibration_at_zero() -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for f in [-0.3, 0.0, 0.2, 0.5, 0.97, 1.0, 1.4] {
        worst = worst.max((calibrate(0.0, f, 0.0, 1.0)? - f64::clamp(f, 0.0, 1.0)).abs());
    }
    Ok(check(
        "calibration at x = 0 equals clamped baseline",
        format!("max deviation {worst:.1e}"),
        "0 (exact)".into(),
        worst == 0.0,
    ))
}

fn theory_constant() -> Result<CheckResult> {
    let v = dfe_theory_variance(3, [0.0, 0.1])?;
    let rel = (v - 0.063).abs() / 0.063;
    Ok(check(
        "prior-averaged DFE variance at n = 3",
        format!("{v:.6} (relative gap to 0.063: {rel:.2e})"),
        "2%".into(),
        rel < 0.02,
    ))
}

/// Runs every check with a fixed seed.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![snapshot_unbiasedness(&mut rng)?];
    out.extend(variance_law(&mut rng)?);
    out.push(optimality_grid(&mut rng)?);
    out.extend(bitflip_round_trip(&mut rng)?);
    out.push(pair_table());
    out.extend(permutation_invariance(&mut rng)?);
    out.push(calibration_at_zero()?);
    out.push(theory_constant()?);
    Ok(out)
}
