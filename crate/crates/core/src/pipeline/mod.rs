//! Experiment orchestration: task specs, labeled dataset generation,
//! evaluation reports and figure reproduction.
//!
//! Everything here is concrete `f64`. Each instance draws from its own
//! ChaCha8 stream (root seed, stream = instance index), so datasets are
//! identical for any rayon thread count.

mod figures;
mod report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::sample_uniform_clifford;
use crate::encoding::{build_feature_matrix, ExperimentInstance, InstanceMeta, Task};
use crate::error::{invalid, Result};
use crate::estimators::{dfe_ghz, renyi_estimate};
use crate::qcore::{
    depolarize, fidelity_with_pure, ghz_state, normalize_subsystem, sample_hilbert_schmidt, swap_functional,
    DensityMatrix, MAX_QUBITS,
};
use crate::shadows::{estimate_linear_with, measure, measure_clifford, Basis, BitFlipNoise, Ensemble, PureProjector};

pub use figures::{fixed_panel, reproduce_figure, reproduce_figure_with, sweep_test_set, FigureId, Profile, Scale};
pub use report::{dfe_theory_variance, evaluate, evaluate_with_direct, EvalReport, EvalRow, REPORT_COLUMNS};

/// Spec files declare this version; others are rejected.
pub const SCHEMA_VERSION: u32 = 1;

/// Measurement count per instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measurements {
    Fixed(usize),
    /// Inclusive range; each instance draws its count uniformly.
    Range([usize; 2]),
}

impl Measurements {
    pub fn bounds(&self) -> (usize, usize) {
        match *self {
            Measurements::Fixed(n) => (n, n),
            Measurements::Range([lo, hi]) => (lo, hi),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let (lo, hi) = self.bounds();
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

/// Distribution of the prepared state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// GHZ under global depolarizing noise of strength `lambda ~ U(range)`.
    DepolarizedGhz {
        #[serde(default = "default_lambda_range")]
        lambda_range: [f64; 2],
    },
    /// GHZ replaced by a Hilbert-Schmidt random state with probability
    /// `p ~ U(range)`.
    AdversarialGhz {
        #[serde(default = "default_p_range")]
        p_range: [f64; 2],
    },
}

fn default_lambda_range() -> [f64; 2] {
    [0.0, 0.1]
}

fn default_p_range() -> [f64; 2] {
    [0.0, 1.0]
}

impl Prior {
    pub fn depolarized() -> Self {
        Prior::DepolarizedGhz {
            lambda_range: default_lambda_range(),
        }
    }

    pub fn adversarial() -> Self {
        Prior::AdversarialGhz {
            p_range: default_p_range(),
        }
    }

    /// Range of the scalar prior parameter.
    pub fn range(&self) -> [f64; 2] {
        match *self {
            Prior::DepolarizedGhz { lambda_range } => lambda_range,
            Prior::AdversarialGhz { p_range } => p_range,
        }
    }

    fn natural_task(&self) -> Task {
        match self {
            Prior::DepolarizedGhz { .. } => Task::GhzFidelity,
            Prior::AdversarialGhz { .. } => Task::RenyiPurity,
        }
    }
}

/// One experiment family, as read from a JSON spec file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub schema_version: u32,
    pub task: Task,
    pub ensemble: Ensemble,
    pub n: usize,
    pub measurements: Measurements,
    /// Readout bit-flip probability.
    #[serde(default)]
    pub noise: f64,
    pub prior: Prior,
    /// Subsystem A for the purity task. Defaults to the first `n / 2` qubits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem_a: Option<Vec<usize>>,
    pub train_count: usize,
    pub test_count: usize,
    /// Feature-matrix capacity. Defaults to the largest measurement count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    /// Permit a prior that is not the usual one for the task.
    #[serde(default)]
    pub allow_prior_mismatch: bool,
}

impl TaskSpec {
    /// Spec with the task's usual prior and no noise.
    pub fn new(task: Task, ensemble: Ensemble, n: usize, measurements: Measurements) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task,
            ensemble,
            n,
            measurements,
            noise: 0.0,
            prior: match task {
                Task::GhzFidelity => Prior::depolarized(),
                Task::RenyiPurity => Prior::adversarial(),
            },
            subsystem_a: None,
            train_count: 0,
            test_count: 0,
            n_max: None,
            allow_prior_mismatch: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| invalid(format!("spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "spec schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n == 0 || self.n > MAX_QUBITS {
            return Err(invalid(format!("n = {} outside 1..={MAX_QUBITS}", self.n)));
        }
        let (lo, hi) = self.measurements.bounds();
        let min_rounds = match self.task {
            Task::GhzFidelity => 1,
            Task::RenyiPurity => 2,
        };
        if lo < min_rounds || lo > hi {
            return Err(invalid(format!("measurement range [{lo}, {hi}] invalid for {:?}", self.task)));
        }
        if hi > self.n_max() {
            return Err(invalid(format!("N = {hi} exceeds n_max = {}", self.n_max())));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(invalid(format!("noise {} outside [0, 0.5)", self.noise)));
        }
        let [a, b] = self.prior.range();
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(invalid(format!("prior range [{a}, {b}] outside [0, 1]")));
        }
        if self.prior.natural_task() != self.task && !self.allow_prior_mismatch {
            return Err(invalid(format!(
                "prior {:?} does not match task {:?}; set allow_prior_mismatch to override",
                self.prior, self.task
            )));
        }
        if self.task == Task::RenyiPurity {
            if self.n < 2 && self.subsystem_a.is_none() {
                return Err(invalid("purity task needs n >= 2 or an explicit subsystem"));
            }
            normalize_subsystem(self.n, &self.subsystem())?;
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.n_max.unwrap_or(self.measurements.bounds().1)
    }

    pub fn subsystem(&self) -> Vec<usize> {
        self.subsystem_a.clone().unwrap_or_else(|| (0..(self.n / 2).max(1)).collect())
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_count,
            Split::Test => self.test_count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Root seed of this split, so train and test never share streams.
    pub fn seed(self, root: u64) -> u64 {
        match self {
            Split::Train => root,
            Split::Test => root ^ 0x9e37_79b9_7f4a_7c15,
        }
    }
}

/// State described by an instance's stored prior parameters.
pub fn prepare_state(prior: &Prior, n: usize, prior_param: f64, state_seed: u64) -> Result<DensityMatrix<f64>> {
    let ghz = ghz_state::<f64>(n)?;
    match prior {
        Prior::DepolarizedGhz { .. } => depolarize(&ghz, prior_param),
        Prior::AdversarialGhz { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(state_seed);
            let omega = sample_hilbert_schmidt::<f64, _>(n, &mut rng)?;
            ghz.to_density().mix(&omega, prior_param)
        }
    }
}

/// Exact target value for `rho` under `spec`.
pub fn exact_label(spec: &TaskSpec, rho: &DensityMatrix<f64>) -> Result<f64> {
    match spec.task {
        Task::GhzFidelity => fidelity_with_pure(rho, &ghz_state(spec.n)?),
        Task::RenyiPurity => swap_functional(rho, &spec.subsystem()),
    }
}

/// Recomputes an instance's label from its stored generating parameters.
pub fn recompute_label(spec: &TaskSpec, meta: &InstanceMeta) -> Result<f64> {
    exact_label(spec, &prepare_state(&spec.prior, spec.n, meta.prior_param, meta.state_seed)?)
}

/// Generates instance `index` of the dataset rooted at `seed`.
pub fn generate_instance(spec: &TaskSpec, seed: u64, index: u64) -> Result<ExperimentInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let rounds = spec.measurements.sample(&mut rng);
    let [a, b] = spec.prior.range();
    let prior_param = if a < b { rng.random_range(a..b) } else { a };
    let state_seed = match spec.prior {
        Prior::AdversarialGhz { .. } => rng.random(),
        Prior::DepolarizedGhz { .. } => 0,
    };
    let rho = prepare_state(&spec.prior, spec.n, prior_param, state_seed)?;
    let noise = if spec.noise > 0.0 {
        Some(BitFlipNoise::new(spec.noise)?)
    } else {
        None
    };
    let noise = noise.as_ref();
    let (records, baseline) = match (spec.task, spec.ensemble) {
        (Task::GhzFidelity, Ensemble::Pauli) => {
            let est = dfe_ghz(&rho, rounds, noise, &mut rng)?;
            let records: Vec<_> = est.records().cloned().collect();
            (records, est.f_hat)
        }
        (Task::GhzFidelity, Ensemble::Clifford) => {
            let records = (0..rounds)
                .map(|_| {
                    let t = sample_uniform_clifford(spec.n, &mut rng)?;
                    measure_clifford(&rho, &t, noise, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let est = estimate_linear_with(&records, &PureProjector::new(&ghz_state(spec.n)?))?;
            (records, est)
        }
        (Task::RenyiPurity, ensemble) => {
            let records = (0..rounds)
                .map(|_| {
                    let basis = Basis::random(ensemble, spec.n, &mut rng)?;
                    measure(&rho, basis, noise, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let est = renyi_estimate(&records, &spec.subsystem())?;
            (records, est)
        }
    };
    Ok(ExperimentInstance {
        features: build_feature_matrix(&records, spec.n_max(), spec.ensemble, spec.n)?,
        baseline,
        label: exact_label(spec, &rho)?,
        meta: InstanceMeta {
            n: spec.n,
            ensemble: spec.ensemble,
            task: spec.task,
            noise: spec.noise,
            prior_param,
            state_seed,
        },
    })
}

/// Generates `count` instances in parallel on the current rayon pool.
pub fn generate_dataset(spec: &TaskSpec, count: usize, seed: u64) -> Result<Vec<ExperimentInstance>> {
    spec.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_instance(spec, seed, i))
        .collect()
}

/// Generates the train or test split declared by `spec`.
pub fn generate_split(spec: &TaskSpec, split: Split, root_seed: u64) -> Result<Vec<ExperimentInstance>> {
    generate_dataset(spec, spec.count(split), split.seed(root_seed))
}

/// Largest label discrepancy after re-deriving every label.
pub fn max_relabel_error(spec: &TaskSpec, instances: &[ExperimentInstance]) -> Result<f64> {
    instances.iter().try_fold(0.0f64, |worst, inst| {
        Ok(worst.max((recompute_label(spec, &inst.meta)? - inst.label).abs()))
    })
}
