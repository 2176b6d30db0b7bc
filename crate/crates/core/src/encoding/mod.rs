//! Integer features for measurement records and the dataset file format.
//!
//! A Pauli record on `n` qubits becomes `n` codes `axis + bit` with
//! `X = 0, Y = 2, Z = 4`. A Clifford record becomes the flattened tableau
//! followed by the outcome (see [`crate::clifford::encode_tableau`]).
//! Unused rows of a [`FeatureMatrix`] hold [`PADDING`].

pub mod container;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clifford::encode_tableau;
use crate::error::{invalid, Error, FormatError, Result};
use crate::shadows::{check_homogeneous, Axis, Basis, Ensemble, MeasurementRecord};

pub const PADDING: i8 = -1;

pub const DATASET_MAGIC: [u8; 8] = *b"SHBDATA\0";

/// Estimation target of an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    GhzFidelity,
    RenyiPurity,
}

/// Row width for an ensemble on `n` qubits.
pub fn feature_dim(ensemble: Ensemble, n: usize) -> usize {
    match ensemble {
        Ensemble::Pauli => n,
        Ensemble::Clifford => n * (2 * n + 3),
    }
}

/// Largest valid code per ensemble.
pub fn vocabulary_max(ensemble: Ensemble) -> i8 {
    match ensemble {
        Ensemble::Pauli => 5,
        Ensemble::Clifford => 3,
    }
}

/// Affine map `(v - center) / scale` applied to codes before the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    /// Centers the code range at zero with unit half-width.
    pub fn for_ensemble(ensemble: Ensemble) -> Self {
        let half = vocabulary_max(ensemble) as f64 / 2.0;
        Self {
            center: half,
            scale: half,
        }
    }

    pub fn apply(&self, v: i8) -> f64 {
        (v as f64 - self.center) / self.scale
    }
}

pub fn encode_pauli_record(record: &MeasurementRecord) -> Result<Vec<i8>> {
    let Basis::Pauli(pb) = record.basis() else {
        return Err(invalid("expected a Pauli record"));
    };
    Ok(pb
        .axes()
        .iter()
        .zip(record.outcome())
        .map(|(a, &b)| {
            let code = match a {
                Axis::X => 0,
                Axis::Y => 2,
                Axis::Z => 4,
            };
            code + b as i8
        })
        .collect())
}

pub fn encode_record(record: &MeasurementRecord) -> Result<Vec<i8>> {
    match record.basis() {
        Basis::Pauli(_) => encode_pauli_record(record),
        Basis::Clifford(t) => encode_tableau(t, record.outcome()),
    }
}

/// Row-major `n_max x d` matrix of codes with padding after `n_valid` rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMatrix {
    n_max: usize,
    d: usize,
    n_valid: usize,
    data: Vec<i8>,
}

impl FeatureMatrix {
    /// Checks the padding layout; vocabulary is checked by dataset reads.
    pub fn from_parts(n_max: usize, d: usize, n_valid: usize, data: Vec<i8>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("feature width must be positive"));
        }
        if data.len() != n_max * d {
            return Err(Error::DimensionMismatch {
                expected: n_max * d,
                found: data.len(),
            });
        }
        if n_valid > n_max {
            return Err(invalid(format!("{n_valid} valid rows exceed capacity {n_max}")));
        }
        if data[n_valid * d..].iter().any(|&v| v != PADDING) {
            return Err(invalid("padding rows must be all -1"));
        }
        if data[..n_valid * d].iter().any(|&v| v < 0) {
            return Err(invalid("valid rows must not contain negative codes"));
        }
        Ok(Self { n_max, d, n_valid, data })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_valid(&self) -> usize {
        self.n_valid
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Copy with valid row `i` moved to position `perm[i]`.
    pub fn permute_valid_rows(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.n_valid];
        if perm.len() != self.n_valid || perm.iter().any(|&p| p >= self.n_valid || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the valid rows"));
        }
        let mut data = self.data.clone();
        for (i, &p) in perm.iter().enumerate() {
            data[p * self.d..(p + 1) * self.d].copy_from_slice(self.row(i));
        }
        Ok(Self { data, ..*self })
    }
}

/// Encodes `records` in order and pads to `n_max` rows. An empty record
/// list needs the row width, so it is taken from `ensemble` and `n`.
pub fn build_feature_matrix(
    records: &[MeasurementRecord],
    n_max: usize,
    ensemble: Ensemble,
    n: usize,
) -> Result<FeatureMatrix> {
    if records.len() > n_max {
        return Err(invalid(format!("{} records exceed capacity {n_max}", records.len())));
    }
    check_homogeneous(records)?;
    if let Some(r) = records.first() {
        if r.ensemble() != ensemble || r.n() != n {
            return Err(invalid("records do not match the declared ensemble and size"));
        }
    }
    let d = feature_dim(ensemble, n);
    let mut data = Vec::with_capacity(n_max * d);
    for r in records {
        data.extend(encode_record(r)?);
    }
    data.resize(n_max * d, PADDING);
    FeatureMatrix::from_parts(n_max, d, records.len(), data)
}

/// Generating parameters and tags of one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub n: usize,
    pub ensemble: Ensemble,
    pub task: Task,
    /// Readout flip probability.
    pub noise: f64,
    /// Depolarizing strength or replacement probability, per the prior.
    pub prior_param: f64,
    /// Seed of the spurious Hilbert-Schmidt state, if any.
    pub state_seed: u64,
}

/// One labeled training or test example.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentInstance {
    pub features: FeatureMatrix,
    /// Raw (unclipped) shadow estimate.
    pub baseline: f64,
    /// Exact value of the target functional.
    pub label: f64,
    pub meta: InstanceMeta,
}

/// Dataset-wide header stored as JSON in the container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub kind: String,
    pub count: usize,
    pub n: usize,
    pub d: usize,
    pub n_max: usize,
    pub ensemble: Ensemble,
    pub task: Task,
    pub noise: f64,
    pub f_lower: f64,
    pub f_upper: f64,
    pub standardization: Standardization,
    /// Free-form provenance, e.g. the generating spec.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

/// Label range shared by both tasks.
pub const LABEL_RANGE: (f64, f64) = (0.0, 1.0);

pub fn dataset_to_bytes(instances: &[ExperimentInstance], provenance: serde_json::Value) -> Result<Vec<u8>> {
    let first = instances.first().ok_or_else(|| invalid("cannot write an empty dataset"))?;
    let m = &first.meta;
    let (n_max, d) = (first.features.n_max(), first.features.d());
    for inst in instances {
        let im = &inst.meta;
        if im.n != m.n || im.ensemble != m.ensemble || im.task != m.task || im.noise.to_bits() != m.noise.to_bits() {
            return Err(invalid("instances disagree on n, ensemble, task or noise"));
        }
        if inst.features.n_max() != n_max || inst.features.d() != d {
            return Err(invalid("instances disagree on feature shape"));
        }
    }
    let header = DatasetHeader {
        kind: "dataset".into(),
        count: instances.len(),
        n: m.n,
        d,
        n_max,
        ensemble: m.ensemble,
        task: m.task,
        noise: m.noise,
        f_lower: LABEL_RANGE.0,
        f_upper: LABEL_RANGE.1,
        standardization: Standardization::for_ensemble(m.ensemble),
        provenance,
    };
    let mut payload = Vec::new();
    for inst in instances {
        payload.extend(inst.features.as_slice().iter().map(|&v| v as u8));
    }
    container::put_u32s(&mut payload, instances.iter().map(|i| i.features.n_valid() as u32));
    container::put_f64s(&mut payload, instances.iter().map(|i| i.baseline));
    container::put_f64s(&mut payload, instances.iter().map(|i| i.label));
    container::put_f64s(&mut payload, instances.iter().map(|i| i.meta.prior_param));
    container::put_u64s(&mut payload, instances.iter().map(|i| i.meta.state_seed));
    container::encode(DATASET_MAGIC, &header, &payload)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<(DatasetHeader, Vec<ExperimentInstance>)> {
    let (header, payload): (DatasetHeader, _) = container::decode(DATASET_MAGIC, bytes)?;
    let bad = |m: String| Error::Format(FormatError::Validation(m));
    if header.kind != "dataset" {
        return Err(bad(format!("container kind {:?} is not a dataset", header.kind)));
    }
    if header.n == 0 || header.n > crate::qcore::MAX_QUBITS {
        return Err(bad(format!("qubit count {} out of range", header.n)));
    }
    if header.d != feature_dim(header.ensemble, header.n) {
        return Err(bad(format!(
            "feature width {} inconsistent with n = {} and {:?}",
            header.d, header.n, header.ensemble
        )));
    }
    let c = header.count;
    let width = header.n_max * header.d;
    let mut cur = container::Cursor::new(&payload);
    let feats = cur.i8s(c * width)?;
    let n_valid = cur.u32s(c)?;
    let baseline = cur.f64s(c)?;
    let label = cur.f64s(c)?;
    let prior = cur.f64s(c)?;
    let seeds = cur.u64s(c)?;
    cur.finish()?;
    let vmax = vocabulary_max(header.ensemble);
    let mut out = Vec::with_capacity(c);
    for i in 0..c {
        let data = feats[i * width..(i + 1) * width].to_vec();
        let nv = n_valid[i] as usize;
        if data[..nv.min(header.n_max) * header.d].iter().any(|&v| v > vmax) {
            return Err(bad(format!("instance {i} has codes outside the vocabulary")));
        }
        let features = FeatureMatrix::from_parts(header.n_max, header.d, nv, data)
            .map_err(|e| bad(format!("instance {i}: {e}")))?;
        if !(header.f_lower..=header.f_upper).contains(&label[i]) {
            return Err(bad(format!("instance {i} label {} outside the feasible range", label[i])));
        }
        out.push(ExperimentInstance {
            features,
            baseline: baseline[i],
            label: label[i],
            meta: InstanceMeta {
                n: header.n,
                ensemble: header.ensemble,
                task: header.task,
                noise: header.noise,
                prior_param: prior[i],
                state_seed: seeds[i],
            },
        });
    }
    Ok((header, out))
}

pub fn dataset_write(instances: &[ExperimentInstance], path: &Path, provenance: serde_json::Value) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(instances, provenance)?)?;
    Ok(())
}

pub fn dataset_read(path: &Path) -> Result<(DatasetHeader, Vec<ExperimentInstance>)> {
    dataset_from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::sample_uniform_clifford;
    use crate::shadows::PauliBasis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn prec(axes: &[Axis], bits: &[u8]) -> MeasurementRecord {
        MeasurementRecord::new(Basis::Pauli(PauliBasis::new(axes.to_vec()).unwrap()), bits.to_vec()).unwrap()
    }

    #[test]
    fn pauli_codes() {
        use Axis::*;
        assert_eq!(encode_pauli_record(&prec(&[X, Z, Y], &[1, 0, 1])).unwrap(), vec![1, 4, 3]);
        assert_eq!(encode_pauli_record(&prec(&[X, X, X], &[0, 0, 0])).unwrap(), vec![0, 0, 0]);
        assert_eq!(encode_pauli_record(&prec(&[Z, Z, Z], &[1, 1, 1])).unwrap(), vec![5, 5, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = sample_uniform_clifford(2, &mut rng).unwrap();
        let c = MeasurementRecord::new(Basis::Clifford(t), vec![0, 1]).unwrap();
        assert!(encode_pauli_record(&c).is_err());
        assert_eq!(encode_record(&c).unwrap().len(), 14);
    }

    #[test]
    fn feature_matrix_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let recs: Vec<_> = (0..10)
            .map(|_| {
                let pb = PauliBasis::random(3, &mut rng).unwrap();
                MeasurementRecord::new(Basis::Pauli(pb), (0..3).map(|_| rng.random_range(0..2)).collect()).unwrap()
            })
            .collect();
        let fm = build_feature_matrix(&recs, 100, Ensemble::Pauli, 3).unwrap();
        assert_eq!((fm.n_max(), fm.d(), fm.n_valid()), (100, 3, 10));
        assert!((10..100).all(|i| fm.row(i) == [-1, -1, -1]));
        assert_eq!(fm.row(3), encode_pauli_record(&recs[3]).unwrap().as_slice());

        let full = build_feature_matrix(&recs, 10, Ensemble::Pauli, 3).unwrap();
        assert!(full.as_slice().iter().all(|&v| v >= 0));
        let empty = build_feature_matrix(&[], 5, Ensemble::Pauli, 3).unwrap();
        assert_eq!(empty.n_valid(), 0);
        assert!(empty.as_slice().iter().all(|&v| v == PADDING));
        assert!(build_feature_matrix(&recs, 9, Ensemble::Pauli, 3).is_err());
        assert!(build_feature_matrix(&recs, 10, Ensemble::Clifford, 3).is_err());
    }

    #[test]
    fn permute_rows() {
        let fm = FeatureMatrix::from_parts(4, 1, 3, vec![0, 1, 2, -1]).unwrap();
        let p = fm.permute_valid_rows(&[2, 0, 1]).unwrap();
        assert_eq!(p.as_slice(), &[1, 2, 0, -1]);
        assert!(fm.permute_valid_rows(&[0, 0, 1]).is_err());
    }

    fn random_dataset(count: usize, seed: u64) -> Vec<ExperimentInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let nv = rng.random_range(0..=8);
                let mut data: Vec<i8> = (0..nv * 3).map(|_| rng.random_range(0..=5)).collect();
                data.resize(24, PADDING);
                ExperimentInstance {
                    features: FeatureMatrix::from_parts(8, 3, nv, data).unwrap(),
                    baseline: rng.random::<f64>() * 3.0 - 1.0,
                    label: rng.random::<f64>(),
                    meta: InstanceMeta {
                        n: 3,
                        ensemble: Ensemble::Pauli,
                        task: Task::GhzFidelity,
                        noise: 0.1,
                        prior_param: rng.random::<f64>(),
                        state_seed: rng.random(),
                    },
                }
            })
            .collect()
    }

    #[test]
    fn dataset_round_trip() {
        let data = random_dataset(1000, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        dataset_write(&data, &path, serde_json::json!({"note": "test"})).unwrap();
        let (h, back) = dataset_read(&path).unwrap();
        assert_eq!(h.count, 1000);
        assert_eq!(back, data);
        for (a, b) in back.iter().zip(&data) {
            assert_eq!(a.baseline.to_bits(), b.baseline.to_bits());
        }
    }

    #[test]
    fn dataset_errors() {
        let data = random_dataset(5, 3);
        let bytes = dataset_to_bytes(&data, serde_json::Value::Null).unwrap();
        let code = |b: &[u8]| match dataset_from_bytes(b) {
            Err(Error::Format(f)) => f.code(),
            other => panic!("expected a format error, got {other:?}"),
        };
        let mut bad = bytes.clone();
        bad[..8].copy_from_slice(b"NOTMAGIC");
        assert_eq!(code(&bad), 1);
        assert_eq!(code(&bytes[..bytes.len() - 10]), 3);
        let mut bad = bytes.clone();
        let k = bad.len() - 40;
        bad[k] ^= 0x55;
        assert_eq!(code(&bad), 4);

        // A header whose width disagrees with n and the ensemble.
        let (mut header, payload): (DatasetHeader, _) = container::decode(DATASET_MAGIC, &bytes).unwrap();
        header.d = 4;
        let forged = container::encode(DATASET_MAGIC, &header, &payload).unwrap();
        assert_eq!(code(&forged), 6);

        assert!(dataset_to_bytes(&[], serde_json::Value::Null).is_err());
    }
}
