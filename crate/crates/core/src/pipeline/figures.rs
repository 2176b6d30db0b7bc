//! Named scale profiles and the generate -> train -> evaluate loop behind
//! each figure panel.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate_with_direct, generate_split, EvalReport, Measurements, Split, TaskSpec};
use crate::encoding::{feature_dim, ExperimentInstance, Standardization, Task};
use crate::error::{invalid, Result};
use crate::neural::{train, HeadMode, Model, NetConfig, TrainConfig};
use crate::shadows::Ensemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(invalid(format!("unknown scale {s:?} (expected desk or paper)"))),
        }
    }
}

/// Dataset sizes, network shape and optimizer settings for a scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub train_count: usize,
    pub test_count: usize,
    pub d_h: usize,
    pub heads: usize,
    pub inducing: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Qubit counts swept by the fixed-N fidelity panels.
    pub fidelity_sizes: Vec<usize>,
    /// Qubit counts swept by the fixed-N purity panels.
    pub renyi_sizes: Vec<usize>,
    /// Training range of N for the varying-N panels.
    pub sweep_range: [usize; 2],
    /// Evaluation grid of N for the varying-N panels.
    pub sweep_grid: Vec<usize>,
    /// Test instances per grid point.
    pub sweep_test_count: usize,
}

impl Profile {
    pub fn for_scale(scale: Scale) -> Self {
        match scale {
            Scale::Desk => Self {
                train_count: 2000,
                test_count: 200,
                d_h: 64,
                heads: 4,
                inducing: 32,
                epochs: 10,
                batch_size: 50,
                learning_rate: 1e-4,
                fidelity_sizes: vec![3, 4, 5],
                renyi_sizes: vec![2, 4],
                sweep_range: [10, 100],
                sweep_grid: (1..=10).map(|k| 10 * k).collect(),
                sweep_test_count: 200,
            },
            Scale::Paper => Self {
                train_count: 10_000,
                test_count: 1000,
                d_h: 128,
                heads: 4,
                inducing: 32,
                epochs: 10,
                batch_size: 50,
                learning_rate: 1e-4,
                fidelity_sizes: vec![3, 4, 5, 6, 7],
                renyi_sizes: vec![2, 4, 6, 8],
                sweep_range: [10, 100],
                sweep_grid: (1..=10).map(|k| 10 * k).collect(),
                sweep_test_count: 100,
            },
        }
    }

    pub fn net_config(&self, ensemble: Ensemble, n: usize) -> Result<NetConfig> {
        NetConfig::new(
            feature_dim(ensemble, n),
            self.d_h,
            self.heads,
            self.inducing,
            Standardization::for_ensemble(ensemble),
        )
    }

    pub fn train_config(&self, seed: u64, mode: HeadMode) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            mode,
            f_lower: crate::encoding::LABEL_RANGE.0,
            f_upper: crate::encoding::LABEL_RANGE.1,
        }
    }

    /// Trains one model on `data` for the spec's ensemble and size.
    pub fn fit(&self, spec: &TaskSpec, data: &[ExperimentInstance], seed: u64, mode: HeadMode) -> Result<Model<f64>> {
        let net = self.net_config(spec.ensemble, spec.n)?;
        Ok(train::<f64>(&self.train_config(seed, mode), &net, data)?.model)
    }
}

/// A figure panel such as `fig2a` or `fig6a`.
///
/// Figures 2-5 compare MSE across qubit counts at fixed N
/// (2: fidelity, 3: fidelity with readout noise, 4: purity, 5: purity with
/// readout noise; panels a/b Pauli N = 10/100, c/d Clifford N = 10/100).
/// Figures 6 and 7 sweep N for fidelity at n = 3 and purity at n = 2
/// (panel a Pauli, b Clifford).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FigureId {
    pub figure: u8,
    pub panel: char,
}

impl FromStr for FigureId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unknown figure id {s:?}"));
        let rest = s.strip_prefix("fig").ok_or_else(bad)?;
        let mut chars = rest.chars();
        let figure = chars.next().and_then(|c| c.to_digit(10)).ok_or_else(bad)? as u8;
        let panel = chars.next().ok_or_else(bad)?;
        if chars.next().is_some() {
            return Err(bad());
        }
        let ok = match figure {
            2..=5 => ('a'..='d').contains(&panel),
            6 | 7 => panel == 'a' || panel == 'b',
            _ => false,
        };
        if ok {
            Ok(Self { figure, panel })
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fig{}{}", self.figure, self.panel)
    }
}

impl FigureId {
    pub fn all() -> Vec<FigureId> {
        let mut out = Vec::new();
        for figure in 2..=5 {
            for panel in 'a'..='d' {
                out.push(FigureId { figure, panel });
            }
        }
        for figure in 6..=7 {
            for panel in ['a', 'b'] {
                out.push(FigureId { figure, panel });
            }
        }
        out
    }

    fn task(&self) -> Task {
        match self.figure {
            2 | 3 | 6 => Task::GhzFidelity,
            _ => Task::RenyiPurity,
        }
    }

    fn ensemble(&self) -> Ensemble {
        match self.panel {
            'a' | 'b' if self.figure <= 5 => Ensemble::Pauli,
            'a' => Ensemble::Pauli,
            _ => Ensemble::Clifford,
        }
    }

    fn noise(&self) -> f64 {
        if matches!(self.figure, 3 | 5) {
            0.1
        } else {
            0.0
        }
    }

    fn fixed_measurements(&self) -> usize {
        if matches!(self.panel, 'a' | 'c') {
            10
        } else {
            100
        }
    }

    fn is_sweep(&self) -> bool {
        self.figure >= 6
    }
}

/// Runs one panel at `scale` and writes `<out_dir>/<figure>.csv`.
pub fn reproduce_figure(id: FigureId, scale: Scale, out_dir: &Path, seed: u64) -> Result<EvalReport> {
    reproduce_figure_with(id, &Profile::for_scale(scale), out_dir, seed)
}

/// As [`reproduce_figure`] with an explicit profile.
pub fn reproduce_figure_with(id: FigureId, profile: &Profile, out_dir: &Path, seed: u64) -> Result<EvalReport> {
    let report = if id.is_sweep() {
        sweep_panel(id, profile, seed)?
    } else {
        let sizes = match id.task() {
            Task::GhzFidelity => &profile.fidelity_sizes,
            Task::RenyiPurity => &profile.renyi_sizes,
        };
        let mut report = EvalReport::default();
        for &n in sizes {
            let mut spec = TaskSpec::new(id.task(), id.ensemble(), n, Measurements::Fixed(id.fixed_measurements()));
            spec.noise = id.noise();
            spec.train_count = profile.train_count;
            spec.test_count = profile.test_count;
            report.extend(fixed_panel(&spec, profile, seed)?);
        }
        report
    };
    std::fs::create_dir_all(out_dir)?;
    report.save_csv(&out_dir.join(format!("{id}.csv")))?;
    Ok(report)
}

/// Residual model trained and evaluated on one fixed-N configuration.
pub fn fixed_panel(spec: &TaskSpec, profile: &Profile, seed: u64) -> Result<EvalReport> {
    let train_set = generate_split(spec, Split::Train, seed)?;
    let test_set = generate_split(spec, Split::Test, seed)?;
    let model = profile.fit(spec, &train_set, seed, HeadMode::Residual)?;
    evaluate_with_direct(spec, &model, None, &test_set)
}

/// Test set with `profile.sweep_test_count` instances at every grid point.
pub fn sweep_test_set(spec: &TaskSpec, profile: &Profile, seed: u64) -> Result<Vec<ExperimentInstance>> {
    let mut out = Vec::new();
    for &nm in &profile.sweep_grid {
        let mut s = spec.clone();
        s.measurements = Measurements::Fixed(nm);
        s.n_max = Some(spec.n_max());
        let root = Split::Test.seed(seed).wrapping_add(nm as u64);
        out.extend(super::generate_dataset(&s, profile.sweep_test_count, root)?);
    }
    Ok(out)
}

fn sweep_panel(id: FigureId, profile: &Profile, seed: u64) -> Result<EvalReport> {
    let n = match id.task() {
        Task::GhzFidelity => 3,
        Task::RenyiPurity => 2,
    };
    let mut spec = TaskSpec::new(id.task(), id.ensemble(), n, Measurements::Range(profile.sweep_range));
    spec.train_count = profile.train_count;
    let train_set = generate_split(&spec, Split::Train, seed)?;
    let test_set = sweep_test_set(&spec, profile, seed)?;
    let model = profile.fit(&spec, &train_set, seed, HeadMode::Residual)?;
    let direct = if id.figure == 6 && id.panel == 'a' {
        Some(profile.fit(&spec, &train_set, seed, HeadMode::Direct)?)
    } else {
        None
    };
    evaluate_with_direct(&spec, &model, direct.as_ref(), &test_set)
}
