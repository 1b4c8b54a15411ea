use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::{accumulate, forward, loss};
use super::{ConfigError, ModelParams};
use crate::tensor::WindowSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle; `None` keeps input order.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-7,
            momentum: 0.9,
            decay: 1e-6,
            epochs: 20,
            batch_size: 16,
            shuffle_seed: Some(0),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training windows")]
    Empty,
    #[error("invalid training setting: {0}")]
    Setting(&'static str),
    #[error(transparent)]
    Shape(#[from] ConfigError),
    #[error(
        "loss became non-finite at epoch {epoch} (update {update}, learning rate {rate:e}); \
         last finite loss {last_loss:e}, largest |param| {max_param:e}. \
         Lower the learning rate or check input scaling"
    )]
    NonFinite {
        epoch: usize,
        update: u64,
        rate: f64,
        last_loss: f64,
        max_param: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: ModelParams,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    /// Training-set loss after each epoch.
    pub history: Vec<f64>,
    pub updates: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::Setting("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Setting("momentum must lie in [0, 1)"));
        }
        if self.decay.is_nan() || self.decay < 0.0 {
            return Err(TrainError::Setting("decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Setting("batch size must be positive"));
        }
        Ok(())
    }
}

/// Inverse-time schedule `lr / (1 + decay * t)`.
pub fn learning_rate(config: &TrainConfig, update: u64) -> f64 {
    config.learning_rate / (1.0 + config.decay * update as f64)
}

/// Mean loss and mean gradient over a batch.
pub fn batch_gradient(
    params: &ModelParams,
    batch: &[&WindowSample],
) -> Result<(f64, Vec<f64>), ConfigError> {
    let mut grad = vec![0.0; params.values.len()];
    let h = params.config.h;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for w in batch {
        if w.target.len() != h {
            return Err(ConfigError::TargetShape {
                expected: h,
                found: w.target.len(),
            });
        }
        let (y, cache) = forward(params, &w.input)?;
        total += loss(&y, &w.target);
        let dy: Vec<f64> = y
            .iter()
            .zip(&w.target)
            .map(|(p, t)| 2.0 * (p - t) / h as f64 * scale)
            .collect();
        accumulate(params, &w.input, &cache, &dy, &mut grad);
    }
    Ok((total * scale, grad))
}

pub fn dataset_loss(params: &ModelParams, windows: &[WindowSample]) -> Result<f64, ConfigError> {
    let mut total = 0.0;
    for w in windows {
        let (y, _) = forward(params, &w.input)?;
        total += loss(&y, &w.target);
    }
    Ok(total / windows.len().max(1) as f64)
}

/// One Nesterov update: the gradient is taken at `θ + μv`, then
/// `v ← μv − η∇` and `θ ← θ + v`. Returns the batch loss at the lookahead.
pub fn nesterov_step(
    params: &mut ModelParams,
    velocity: &mut [f64],
    batch: &[&WindowSample],
    momentum: f64,
    rate: f64,
) -> Result<f64, ConfigError> {
    let mut ahead = params.clone();
    for (a, v) in ahead.values.iter_mut().zip(velocity.iter()) {
        *a += momentum * v;
    }
    let (l, grad) = batch_gradient(&ahead, batch)?;
    for ((p, v), g) in params.values.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
        *v = momentum * *v - rate * g;
        *p += *v;
    }
    Ok(l)
}

pub fn train(
    windows: &[WindowSample],
    init: ModelParams,
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if windows.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut params = init;
    let mut velocity = vec![0.0; params.values.len()];
    let initial_loss = dataset_loss(&params, windows)?;
    let mut last_loss = initial_loss;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut rng = config.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut update: u64 = 0;
    for epoch in 1..=config.epochs {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &windows[i]).collect();
            let rate = learning_rate(config, update);
            let l = nesterov_step(&mut params, &mut velocity, &batch, config.momentum, rate)?;
            update += 1;
            if !l.is_finite() || !params.is_finite() {
                return Err(non_finite(epoch, update, rate, last_loss, &params));
            }
        }
        let l = dataset_loss(&params, windows)?;
        if !l.is_finite() {
            return Err(non_finite(epoch, update, learning_rate(config, update), last_loss, &params));
        }
        log::debug!("epoch {epoch}: loss {l:.6e}");
        last_loss = l;
        history.push(l);
    }
    Ok(TrainReport {
        params,
        initial_loss,
        history,
        updates: update,
    })
}

fn non_finite(epoch: usize, update: u64, rate: f64, last_loss: f64, p: &ModelParams) -> TrainError {
    let max_param = p
        .values
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    TrainError::NonFinite {
        epoch,
        update,
        rate,
        last_loss,
        max_param,
    }
}
