//! Mini-batch Adam training.
//!
//! Batches are drawn with replacement: slot `j` of iteration `i` takes sample
//! `floor(u * n)` for the next uniform `u` of a ChaCha8 stream seeded from the
//! config seed. Gradients are summed in batch order on one thread, so a run
//! is reproducible bit for bit. Weight decay is added to the gradient of
//! weights (not biases) before the Adam moments.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictorModel;
use crate::error::{Error, Result};
use crate::features::FeatureTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Learning rate multiplier applied from iteration `iterations / 2` on.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            iterations: 4000,
            batch_size: 64,
            weight_decay: 5e-4,
            lr_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "iterations and batch size must be positive".into(),
            ));
        }
        if self.lr < 0.0 || self.weight_decay < 0.0 || self.lr_decay <= 0.0 {
            return Err(Error::Config(
                "learning rate and decay settings must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        if iteration < self.iterations / 2 {
            self.lr
        } else {
            self.lr * self.lr_decay
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    /// Mean batch loss before the update.
    pub loss: f64,
    pub lr: f64,
}

/// Trains `model` in place and returns the per-iteration log.
pub fn train(
    model: &mut PredictorModel,
    data: &[(FeatureTensor, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<Vec<LogEntry>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    for (x, t) in data {
        model.check_input(x)?;
        if t.len() != model.config.outputs {
            return Err(Error::Input(format!(
                "target has {} values, model predicts {}",
                t.len(),
                model.config.outputs
            )));
        }
    }
    let n_params = model.params.len();
    let decay = model.layout().decay_mask();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut log = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        grad.fill(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..cfg.batch_size {
            let u: f64 = batch_rng.gen();
            let idx = ((u * data.len() as f64) as usize).min(data.len() - 1);
            let (x, t) = &data[idx];
            batch_loss += model.loss_and_grad(x, t, Some(&mut dropout_rng), &mut grad);
        }
        let b = cfg.batch_size as f64;
        batch_loss /= b;
        if !batch_loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("batch loss is {batch_loss}"),
            });
        }
        let lr = cfg.lr_at(it);
        let t = (it + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..n_params {
            let mut g = grad[i] / b;
            if decay[i] {
                g += cfg.weight_decay * model.params[i];
            }
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * g;
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * g * g;
            let step = lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + cfg.adam_epsilon);
            model.params[i] -= step;
        }
        if let Some(i) = model.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("parameter {i} became {}", model.params[i]),
            });
        }
        log.push(LogEntry {
            iteration: it,
            loss: batch_loss,
            lr,
        });
    }
    Ok(log)
}

/// CSV with columns `iteration`, `loss`, `lr`.
pub fn write_training_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in log {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
