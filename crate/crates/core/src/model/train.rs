//! Minibatch training with SGD or Adam.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_loss, batch_loss_and_gradients, prepare_batch, Model, ModelError};
use crate::featurization::FeaturizedAtoms;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-2, epochs: 100, batch_size: 32, seed: 0, optimizer: Optimizer::adam() }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted; it leaves parameters untouched.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!(
                "learning rate must be a non-negative finite number, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch size must be at least 1".into()));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
                return Err(ModelError::Config(format!(
                    "Adam needs 0 ≤ β1, β2 < 1 and ε > 0, got β1={beta1}, β2={beta2}, ε={epsilon}"
                )));
            }
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Trains a copy of `model` and returns it with the per-epoch loss history.
///
/// Each epoch shuffles the dataset with a generator seeded from `cfg.seed`,
/// then steps once per minibatch. Within a minibatch samples are evaluated
/// in dataset order, so a full batch reproduces [`super::loss_and_gradients`]
/// exactly. The recorded loss is the full-dataset MSE after the epoch's
/// updates.
pub fn train(
    model: &Model,
    dataset: &[(FeaturizedAtoms, f64)],
    cfg: &TrainConfig,
) -> Result<(Model, Vec<f64>), ModelError> {
    cfg.validate()?;
    let mut model = model.clone();
    let (prepared, targets) = prepare_batch(&model, dataset)?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut order = all.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState { m: vec![0.0; model.num_parameters()], v: vec![0.0; model.num_parameters()], step: 0 };
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let (loss, grads) =
                batch_loss_and_gradients(&model, &prepared, &targets, &batch).map_err(|e| diverged(e, epoch))?;
            if !loss.is_finite() {
                return Err(ModelError::Divergence { epoch, loss });
            }
            let grads = grads.flatten();
            let mut params = model.parameters();
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grads) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, epsilon } => {
                    adam.step += 1;
                    let c1 = 1.0 - beta1.powi(adam.step);
                    let c2 = 1.0 - beta2.powi(adam.step);
                    for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                        adam.m[k] = beta1 * adam.m[k] + (1.0 - beta1) * g;
                        adam.v[k] = beta2 * adam.v[k] + (1.0 - beta2) * g * g;
                        let m_hat = adam.m[k] / c1;
                        let v_hat = adam.v[k] / c2;
                        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
            model.set_parameters(&params)?;
        }
        let loss = batch_loss(&model, &prepared, &targets, &all).map_err(|e| diverged(e, epoch))?;
        if !loss.is_finite() {
            return Err(ModelError::Divergence { epoch, loss });
        }
        log::debug!("epoch {epoch}: mse {loss:e}");
        history.push(loss);
    }
    Ok((model, history))
}

fn diverged(e: ModelError, epoch: usize) -> ModelError {
    match e {
        ModelError::NonFinite { .. } => ModelError::Divergence { epoch, loss: f64::NAN },
        other => other,
    }
}
