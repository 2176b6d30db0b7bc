//! MSE tables comparing the shadow baseline with the trained model.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Prior, TaskSpec};
use crate::encoding::{ExperimentInstance, Task};
use crate::error::{invalid, Error, Result};
use crate::estimators::dfe_variance;
use crate::neural::Model;
use crate::shadows::Ensemble;

/// One (configuration, N) point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: Task,
    pub ensemble: Ensemble,
    pub n: usize,
    #[serde(rename = "N")]
    pub measurements: usize,
    pub lambda: f64,
    pub mse_shadow: f64,
    pub mse_bayes: f64,
    /// `1 - mse_bayes / mse_shadow`.
    pub reduction: f64,
    pub count: usize,
    pub mse_direct: Option<f64>,
    /// Prior-averaged single-round variance over N, where known in closed form.
    pub theory: Option<f64>,
}

/// Column order of the CSV form.
pub const REPORT_COLUMNS: [&str; 11] = [
    "task",
    "ensemble",
    "n",
    "N",
    "lambda",
    "mse_shadow",
    "mse_bayes",
    "reduction",
    "count",
    "mse_direct",
    "theory",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        // Serializing a row emits the header itself; an empty report still
        // gets one.
        if self.rows.is_empty() {
            out.write_record(REPORT_COLUMNS).map_err(csv_err)?;
        }
        for r in &self.rows {
            out.serialize(r).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().ne(REPORT_COLUMNS) {
            return Err(invalid(format!("unexpected report header {headers:?}")));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<EvalRow>, _>>().map_err(csv_err)?;
        Ok(Self { rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => invalid(format!("csv: {other:?}")),
    }
}

/// `E_lambda[Var F]` for the Pauli DFE rounds under a uniform depolarizing
/// prior, by composite Simpson quadrature.
pub fn dfe_theory_variance(n: usize, lambda_range: [f64; 2]) -> Result<f64> {
    let [a, b] = lambda_range;
    let shrink = 1.0 - 0.5f64.powi(n as i32);
    let var = |l: f64| dfe_variance(1.0 - l * shrink);
    if a == b {
        return var(a);
    }
    let m = 200;
    let h = (b - a) / m as f64;
    let mut acc = var(a)? + var(b)?;
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * var(a + k as f64 * h)?;
    }
    Ok(acc * h / 3.0 / (b - a))
}

fn theory_per_round(spec: &TaskSpec) -> Result<Option<f64>> {
    match (spec.task, spec.ensemble, spec.prior) {
        (Task::GhzFidelity, Ensemble::Pauli, Prior::DepolarizedGhz { lambda_range }) if spec.noise == 0.0 => {
            Ok(Some(dfe_theory_variance(spec.n, lambda_range)?))
        }
        _ => Ok(None),
    }
}

fn predictions(model: &Model<f64>, test: &[ExperimentInstance]) -> Result<Vec<f64>> {
    test.par_iter().map(|i| model.predict(&i.features, i.baseline)).collect()
}

/// Per-N report of shadow vs model squared error on `test`.
pub fn evaluate(spec: &TaskSpec, model: &Model<f64>, test: &[ExperimentInstance]) -> Result<EvalReport> {
    evaluate_with_direct(spec, model, None, test)
}

/// As [`evaluate`], plus the squared error of a second (direct-mode) model.
pub fn evaluate_with_direct(
    spec: &TaskSpec,
    model: &Model<f64>,
    direct: Option<&Model<f64>>,
    test: &[ExperimentInstance],
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(invalid("test set is empty"));
    }
    let d_in = model.params.config.d_in;
    if let Some(bad) = test.iter().find(|i| i.features.d() != d_in) {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            found: bad.features.d(),
        });
    }
    let bayes = predictions(model, test)?;
    let direct = direct.map(|m| predictions(m, test)).transpose()?;
    let theory = theory_per_round(spec)?;

    // (sum shadow, sum bayes, sum direct, count) per measurement count.
    let mut groups: BTreeMap<usize, (f64, f64, f64, usize)> = BTreeMap::new();
    for (k, inst) in test.iter().enumerate() {
        let g = groups.entry(inst.features.n_valid()).or_default();
        g.0 += (inst.baseline - inst.label).powi(2);
        g.1 += (bayes[k] - inst.label).powi(2);
        if let Some(d) = &direct {
            g.2 += (d[k] - inst.label).powi(2);
        }
        g.3 += 1;
    }
    let rows = groups
        .into_iter()
        .map(|(nm, (s, b, d, c))| {
            let c_f = c as f64;
            let (mse_shadow, mse_bayes) = (s / c_f, b / c_f);
            EvalRow {
                task: spec.task,
                ensemble: spec.ensemble,
                n: spec.n,
                measurements: nm,
                lambda: spec.noise,
                mse_shadow,
                mse_bayes,
                reduction: 1.0 - mse_bayes / mse_shadow,
                count: c,
                mse_direct: direct.as_ref().map(|_| d / c_f),
                theory: theory.map(|v| v / nm as f64),
            }
        })
        .collect();
    Ok(EvalReport { rows })
}
