//! Adam and the mini-batch training loop.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HeadMode, Model, NetConfig, SetTransformerParams};
use crate::encoding::ExperimentInstance;
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub mode: HeadMode,
    pub f_lower: f64,
    pub f_upper: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(invalid("learning rate and batch size must be positive"));
        }
        if !(self.f_lower < self.f_upper) {
            return Err(invalid("f_lower must be below f_upper"));
        }
        Ok(())
    }
}

/// Adam with bias correction; moments share the parameter layout.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: SetTransformerParams<T>,
    v: SetTransformerParams<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: &NetConfig) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: SetTransformerParams::zeros(config),
            v: SetTransformerParams::zeros(config),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut SetTransformerParams<T>, grad: &SetTransformerParams<T>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(self.step as i32));
        let c2 = T::one() - T::lit(self.beta2.powi(self.step as i32));
        let (lr, eps) = (T::lit(lr), T::lit(self.eps));
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Real> {
    pub model: Model<T>,
    /// Mean squared error over each epoch, in order.
    pub loss_history: Vec<f64>,
}

fn check_dataset(d_in: usize, data: &[ExperimentInstance]) -> Result<()> {
    let first = data.first().ok_or_else(|| invalid("training set is empty"))?;
    let n_max = first.features.n_max();
    if let Some(bad) = data.iter().find(|i| i.features.d() != d_in || i.features.n_max() != n_max) {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            found: bad.features.d(),
        });
    }
    Ok(())
}

/// Initializes from `config.seed` and trains.
pub fn train<T: Real>(config: &TrainConfig, net: &NetConfig, data: &[ExperimentInstance]) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = SetTransformerParams::init(net, &mut rng)?;
    let model = Model::new(params, config.mode, config.f_lower, config.f_upper)?;
    train_from(config, model, data)
}

/// Continues training `model` with a fresh optimizer state.
pub fn train_from<T: Real>(config: &TrainConfig, mut model: Model<T>, data: &[ExperimentInstance]) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_dataset(model.params.config.d_in, data)?;
    model.mode = config.mode;
    model.f_lower = config.f_lower;
    model.f_upper = config.f_upper;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&model.params.config);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            // Per-instance gradients run in parallel; the sum is taken in
            // batch order so results do not depend on the thread count.
            let parts = batch
                .par_iter()
                .map(|&i| {
                    let inst = &data[i];
                    model.loss_and_grad(&inst.features, T::lit(inst.baseline), T::lit(inst.label))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = SetTransformerParams::zeros(&model.params.config);
            let w = T::one() / T::from_count(batch.len());
            for (loss, g) in &parts {
                epoch_loss += loss.as_f64();
                grad.add_scaled(g, w);
            }
            adam.update(&mut model.params, &grad, config.learning_rate);
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}
