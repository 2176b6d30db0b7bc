//! Set transformer with a calibrated residual head.
//!
//! The trunk is `ISAB -> ISAB -> PMA -> SAB -> SAB -> Linear`, built from
//! one attention block type:
//!
//! ```text
//! MAB(Q, K) = LN1(H + relu(H Wo + bo)),  H = LN0(Qp + Attn(Qp, Kp, Vp))
//! ```
//!
//! with `Qp = Q Wq + bq` and `Kp`, `Vp` projected from `K`. Attention is
//! multihead softmax with scale `1/sqrt(d_h / heads)`. `ISAB(X)` is
//! `MAB(X, MAB(I, X))` with learned inducing points `I`; PMA pools with one
//! learned seed. Gradients are hand-written and checked against central
//! differences in the tests.

mod layers;
mod train;

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{container, FeatureMatrix, Standardization};
use crate::error::{invalid, Error, FormatError, Result};
use crate::scalar::Real;

pub use layers::MabParams;
use layers::{mab_backward, mab_forward, MabCache};
pub use train::{train, train_from, Adam, TrainConfig, TrainOutcome};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SHBCKPT\0";

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Feature row width.
    pub d_in: usize,
    pub d_h: usize,
    pub heads: usize,
    /// Inducing points per ISAB.
    pub inducing: usize,
    /// Exclude padding rows from attention keys. Off by default.
    #[serde(default)]
    pub mask_padding: bool,
    pub ln_eps: f64,
    pub standardization: Standardization,
}

impl NetConfig {
    pub fn new(d_in: usize, d_h: usize, heads: usize, inducing: usize, standardization: Standardization) -> Result<Self> {
        let c = Self {
            d_in,
            d_h,
            heads,
            inducing,
            mask_padding: false,
            ln_eps: 1e-5,
            standardization,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_h == 0 || self.heads == 0 || self.inducing == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        if self.d_h % self.heads != 0 {
            return Err(invalid(format!("d_h = {} not divisible by {} heads", self.d_h, self.heads)));
        }
        if !(self.ln_eps > 0.0) || !(self.standardization.scale > 0.0) {
            return Err(invalid("normalization constants must be positive"));
        }
        Ok(())
    }
}

/// Whether the head output is a residual correction or the estimate itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// `sigma(x, F)` blends the clipped baseline with the saturating limits.
    Residual,
    /// `sigmoid(x)`, ignoring the baseline.
    Direct,
}

/// All trainable tensors. Gradients and optimizer moments reuse this type.
#[derive(Clone, Debug, PartialEq)]
pub struct SetTransformerParams<T: Real> {
    pub config: NetConfig,
    pub isab1_inducing: Array2<T>,
    pub isab1_a: MabParams<T>,
    pub isab1_b: MabParams<T>,
    pub isab2_inducing: Array2<T>,
    pub isab2_a: MabParams<T>,
    pub isab2_b: MabParams<T>,
    pub pma_seed: Array2<T>,
    pub pma: MabParams<T>,
    pub sab1: MabParams<T>,
    pub sab2: MabParams<T>,
    pub head_w: Array2<T>,
    pub head_b: Array2<T>,
}

fn uniform<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-bound..=bound)))
}

impl<T: Real> SetTransformerParams<T> {
    pub fn zeros(config: &NetConfig) -> Self {
        let (d, h, m) = (config.d_in, config.d_h, config.inducing);
        Self {
            config: config.clone(),
            isab1_inducing: Array2::zeros((m, h)),
            isab1_a: MabParams::zeros(h, d, h),
            isab1_b: MabParams::zeros(d, h, h),
            isab2_inducing: Array2::zeros((m, h)),
            isab2_a: MabParams::zeros(h, h, h),
            isab2_b: MabParams::zeros(h, h, h),
            pma_seed: Array2::zeros((1, h)),
            pma: MabParams::zeros(h, h, h),
            sab1: MabParams::zeros(h, h, h),
            sab2: MabParams::zeros(h, h, h),
            head_w: Array2::zeros((h, 1)),
            head_b: Array2::zeros((1, 1)),
        }
    }

    /// Linear layers draw from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, inducing
    /// points and the seed are Glorot-uniform, normalization gains start at 1.
    pub fn init<R: Rng + ?Sized>(config: &NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut p = Self::zeros(config);
        let (h, m) = (config.d_h, config.inducing);
        let glorot = |r: usize, c: usize| (6.0 / (r + c) as f64).sqrt();
        let init_mab = |mab: &mut MabParams<T>, rng: &mut R| {
            for (w, b) in [
                (&mut mab.wq, &mut mab.bq),
                (&mut mab.wk, &mut mab.bk),
                (&mut mab.wv, &mut mab.bv),
                (&mut mab.wo, &mut mab.bo),
            ] {
                let bound = 1.0 / (w.nrows() as f64).sqrt();
                *w = uniform(w.nrows(), w.ncols(), bound, rng);
                *b = uniform(1, b.ncols(), bound, rng);
            }
            mab.ln0_g.fill(T::one());
            mab.ln1_g.fill(T::one());
        };
        p.isab1_inducing = uniform(m, h, glorot(m, h), rng);
        init_mab(&mut p.isab1_a, rng);
        init_mab(&mut p.isab1_b, rng);
        p.isab2_inducing = uniform(m, h, glorot(m, h), rng);
        init_mab(&mut p.isab2_a, rng);
        init_mab(&mut p.isab2_b, rng);
        p.pma_seed = uniform(1, h, glorot(1, h), rng);
        init_mab(&mut p.pma, rng);
        init_mab(&mut p.sab1, rng);
        init_mab(&mut p.sab2, rng);
        let bound = 1.0 / (h as f64).sqrt();
        p.head_w = uniform(h, 1, bound, rng);
        p.head_b = uniform(1, 1, bound, rng);
        Ok(p)
    }

    /// Zeroes the output layer so the head emits `x = 0` for every input.
    pub fn zero_head(&mut self) {
        self.head_w.fill(T::zero());
        self.head_b.fill(T::zero());
    }

    /// Named tensors in a fixed order, used for checkpoints and optimizers.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<T>)> {
        let mut out = vec![("isab1.inducing".to_string(), &self.isab1_inducing)];
        fn push_mab<'a, T: Real>(out: &mut Vec<(String, &'a Array2<T>)>, prefix: &str, m: &'a MabParams<T>) {
            for (name, t) in MabParams::<T>::NAMES.iter().zip(m.tensors()) {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        push_mab(&mut out, "isab1.a", &self.isab1_a);
        push_mab(&mut out, "isab1.b", &self.isab1_b);
        out.push(("isab2.inducing".into(), &self.isab2_inducing));
        push_mab(&mut out, "isab2.a", &self.isab2_a);
        push_mab(&mut out, "isab2.b", &self.isab2_b);
        out.push(("pma.seed".into(), &self.pma_seed));
        push_mab(&mut out, "pma", &self.pma);
        push_mab(&mut out, "sab1", &self.sab1);
        push_mab(&mut out, "sab2", &self.sab2);
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Array2<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<T>> {
        let mut out: Vec<&mut Array2<T>> = vec![&mut self.isab1_inducing];
        out.extend(self.isab1_a.tensors_mut());
        out.extend(self.isab1_b.tensors_mut());
        out.push(&mut self.isab2_inducing);
        out.extend(self.isab2_a.tensors_mut());
        out.extend(self.isab2_b.tensors_mut());
        out.push(&mut self.pma_seed);
        out.extend(self.pma.tensors_mut());
        out.extend(self.sab1.tensors_mut());
        out.extend(self.sab2.tensors_mut());
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Standardized real input matrix, padding rows included.
    pub fn input_matrix(&self, v: &FeatureMatrix) -> Result<Array2<T>> {
        if v.d() != self.config.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.config.d_in,
                found: v.d(),
            });
        }
        let s = self.config.standardization;
        Ok(Array2::from_shape_fn((v.n_max(), v.d()), |(r, c)| T::lit(s.apply(v.row(r)[c]))))
    }

    pub fn forward(&self, v: &FeatureMatrix) -> Result<T> {
        Ok(self.forward_cached(v)?.0)
    }

    pub(crate) fn forward_cached(&self, v: &FeatureMatrix) -> Result<(T, ForwardCache<T>)> {
        let x = self.input_matrix(v)?;
        let heads = self.config.heads;
        let eps = T::lit(self.config.ln_eps);
        let mask = self.config.mask_padding.then_some(v.n_valid());
        let (h1, c1a) = mab_forward(&self.isab1_a, &self.isab1_inducing, &x, heads, mask, eps);
        let (z1, c1b) = mab_forward(&self.isab1_b, &x, &h1, heads, None, eps);
        let (h2, c2a) = mab_forward(&self.isab2_a, &self.isab2_inducing, &z1, heads, mask, eps);
        let (z2, c2b) = mab_forward(&self.isab2_b, &z1, &h2, heads, None, eps);
        let (pooled, cp) = mab_forward(&self.pma, &self.pma_seed, &z2, heads, mask, eps);
        let (s1, cs1) = mab_forward(&self.sab1, &pooled, &pooled, heads, None, eps);
        let (s2, cs2) = mab_forward(&self.sab2, &s1, &s1, heads, None, eps);
        let out = s2.dot(&self.head_w)[[0, 0]] + self.head_b[[0, 0]];
        let cache = ForwardCache {
            mabs: [c1a, c1b, c2a, c2b, cp, cs1, cs2],
            s2,
        };
        Ok((out, cache))
    }

    /// Gradient of the head output with upstream derivative `dx`.
    pub(crate) fn backward(&self, cache: &ForwardCache<T>, dx: T) -> Self {
        let heads = self.config.heads;
        let mut g = Self::zeros(&self.config);
        let [c1a, c1b, c2a, c2b, cp, cs1, cs2] = &cache.mabs;
        g.head_w = cache.s2.t().mapv(|v| v * dx);
        g.head_b[[0, 0]] = dx;
        let ds2 = self.head_w.t().mapv(|v| v * dx);
        let (dq, dk) = mab_backward(&self.sab2, cs2, &ds2, heads, &mut g.sab2);
        let (dq, dk) = mab_backward(&self.sab1, cs1, &(dq + dk), heads, &mut g.sab1);
        let (dseed, dz2) = mab_backward(&self.pma, cp, &(dq + dk), heads, &mut g.pma);
        g.pma_seed += &dseed;
        let (mut dz1, dh2) = mab_backward(&self.isab2_b, c2b, &dz2, heads, &mut g.isab2_b);
        let (di2, dz1_k) = mab_backward(&self.isab2_a, c2a, &dh2, heads, &mut g.isab2_a);
        g.isab2_inducing += &di2;
        dz1 += &dz1_k;
        let (_, dh1) = mab_backward(&self.isab1_b, c1b, &dz1, heads, &mut g.isab1_b);
        let (di1, _) = mab_backward(&self.isab1_a, c1a, &dh1, heads, &mut g.isab1_a);
        g.isab1_inducing += &di1;
        g
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(alpha, b);
        }
    }
}

pub(crate) struct ForwardCache<T: Real> {
    mabs: [MabCache<T>; 7],
    s2: Array2<T>,
}

/// `F_c (1 - tanh|x|) + 1{x > 0} tanh x` with `F_c = clamp(F, f_l, f_u)`.
pub fn calibrate<T: Real>(x: T, f: T, f_lower: T, f_upper: T) -> Result<T> {
    if !(f_lower < f_upper) {
        return Err(invalid(format!("empty feasible range [{f_lower}, {f_upper}]")));
    }
    Ok(calibrate_with_slope(x, f, f_lower, f_upper).0)
}

/// Value and `d sigma / dx`. At `x = 0` the right derivative is used, so
/// the slope there is `1 - F_c`.
fn calibrate_with_slope<T: Real>(x: T, f: T, f_lower: T, f_upper: T) -> (T, T) {
    let fc = f.max(f_lower).min(f_upper);
    let t = x.abs().tanh();
    let sech2 = T::one() - t * t;
    if x >= T::zero() {
        let tp = if x > T::zero() { t } else { T::zero() };
        (fc * (T::one() - t) + tp, (T::one() - fc) * sech2)
    } else {
        (fc * (T::one() - t), fc * sech2)
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Trained network together with how its output is turned into an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real> {
    pub params: SetTransformerParams<T>,
    pub mode: HeadMode,
    pub f_lower: f64,
    pub f_upper: f64,
}

impl<T: Real> Model<T> {
    pub fn new(params: SetTransformerParams<T>, mode: HeadMode, f_lower: f64, f_upper: f64) -> Result<Self> {
        if !(f_lower < f_upper) {
            return Err(invalid(format!("empty feasible range [{f_lower}, {f_upper}]")));
        }
        Ok(Self {
            params,
            mode,
            f_lower,
            f_upper,
        })
    }

    fn output(&self, x: T, baseline: T) -> (T, T) {
        match self.mode {
            HeadMode::Residual => calibrate_with_slope(x, baseline, T::lit(self.f_lower), T::lit(self.f_upper)),
            HeadMode::Direct => {
                let s = sigmoid(x);
                (s, s * (T::one() - s))
            }
        }
    }

    /// Estimate of the target functional for one measurement set.
    pub fn predict(&self, features: &FeatureMatrix, baseline: T) -> Result<T> {
        let x = self.params.forward(features)?;
        Ok(self.output(x, baseline).0)
    }

    /// Squared error against `label` and its gradient.
    pub fn loss_and_grad(&self, features: &FeatureMatrix, baseline: T, label: T) -> Result<(T, SetTransformerParams<T>)> {
        let (x, cache) = self.params.forward_cached(features)?;
        let (pred, slope) = self.output(x, baseline);
        let err = pred - label;
        let grad = self.params.backward(&cache, T::lit(2.0) * err * slope);
        Ok((err * err, grad))
    }

    pub fn loss(&self, features: &FeatureMatrix, baseline: T, label: T) -> Result<T> {
        let e = self.predict(features, baseline)? - label;
        Ok(e * e)
    }

    pub fn save(&self, path: &Path, provenance: serde_json::Value) -> Result<()> {
        std::fs::write(path, self.to_bytes(provenance)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self, provenance: serde_json::Value) -> Result<Vec<u8>> {
        let named = self.params.named_tensors();
        let header = CheckpointHeader {
            kind: "checkpoint".into(),
            config: self.params.config.clone(),
            mode: self.mode,
            f_lower: self.f_lower,
            f_upper: self.f_upper,
            tensors: named
                .iter()
                .map(|(name, t)| TensorInfo {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
            provenance,
        };
        let mut payload = Vec::with_capacity(8 * self.params.parameter_count());
        for (_, t) in &named {
            container::put_f64s(&mut payload, t.iter().map(|v| v.as_f64()));
        }
        container::encode(CHECKPOINT_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload): (CheckpointHeader, _) = container::decode(CHECKPOINT_MAGIC, bytes)?;
        let bad = |m: String| Error::Format(FormatError::Validation(m));
        if header.kind != "checkpoint" {
            return Err(bad(format!("container kind {:?} is not a checkpoint", header.kind)));
        }
        header.config.validate().map_err(|e| bad(e.to_string()))?;
        let mut params = SetTransformerParams::<T>::zeros(&header.config);
        let expected: Vec<(String, usize, usize)> = params
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.nrows(), t.ncols()))
            .collect();
        let found: Vec<(String, usize, usize)> =
            header.tensors.iter().map(|t| (t.name.clone(), t.rows, t.cols)).collect();
        if expected != found {
            return Err(bad("tensor table does not match the network configuration".into()));
        }
        let mut cur = container::Cursor::new(&payload);
        for t in params.tensors_mut() {
            let vals = cur.f64s(t.len())?;
            for (dst, v) in t.iter_mut().zip(vals) {
                *dst = T::lit(v);
            }
        }
        cur.finish()?;
        Model::new(params, header.mode, header.f_lower, header.f_upper).map_err(|e| bad(e.to_string()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    kind: String,
    config: NetConfig,
    mode: HeadMode,
    f_lower: f64,
    f_upper: f64,
    tensors: Vec<TensorInfo>,
    #[serde(default)]
    provenance: serde_json::Value,
}
