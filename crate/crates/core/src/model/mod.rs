//! Single-layer 3D convolution regressor.
//!
//! `input [m][15][5][k+1] -> conv (full channel depth) -> ReLU -> max-pool
//! -> dense ReLU -> linear h`. All parameters live in one flat vector so the
//! optimizer and checkpoint code can treat them uniformly; [`Layout`] maps
//! named tensors onto it.

mod checkpoint;
mod net;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use net::{backward, forward, loss, Cache, Gradients};
pub use train::{
    batch_gradient, dataset_loss, learning_rate, nesterov_step, train, TrainConfig, TrainError,
    TrainReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{PriceScaler, EVENTS, WORDS};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("kernel extent {kernel} exceeds input extent {input} on the {axis} axis")]
    KernelTooLarge {
        axis: &'static str,
        kernel: usize,
        input: usize,
    },
    #[error("pooling extent {pool} exceeds convolution output {output} on the {axis} axis")]
    PoolTooLarge {
        axis: &'static str,
        pool: usize,
        output: usize,
    },
    #[error("input has {found} values, expected {expected}")]
    InputShape { expected: usize, found: usize },
    #[error("target has {found} values, expected {expected}")]
    TargetShape { expected: usize, found: usize },
    #[error("parameter vector has {found} values, expected {expected}")]
    ParamShape { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Days per window.
    pub m: usize,
    /// Predicted days.
    pub h: usize,
    /// Embedding dimension; the input has `k + 1` channels.
    pub k: usize,
    pub filters: usize,
    /// Kernel extents over (day, word, event).
    pub kernel: [usize; 3],
    /// Max-pool extents over (day, word, event).
    pub pool: [usize; 3],
    pub hidden: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            m: 10,
            h: 5,
            k: 300,
            filters: 8,
            kernel: [3, 3, 3],
            pool: [2, 2, 2],
            hidden: 64,
            seed: 0,
        }
    }
}

const AXES: [&str; 3] = ["day", "word", "event"];

impl ModelConfig {
    pub fn channels(&self) -> usize {
        self.k + 1
    }

    pub fn input_extents(&self) -> [usize; 3] {
        [self.m, WORDS, EVENTS]
    }

    pub fn input_len(&self) -> usize {
        self.m * WORDS * EVENTS * self.channels()
    }

    pub fn conv_extents(&self) -> [usize; 3] {
        let i = self.input_extents();
        [0, 1, 2].map(|a| i[a] + 1 - self.kernel[a])
    }

    pub fn pool_extents(&self) -> [usize; 3] {
        let c = self.conv_extents();
        [0, 1, 2].map(|a| c[a] / self.pool[a])
    }

    pub fn flat_len(&self) -> usize {
        self.filters * self.pool_extents().iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (v, name) in [
            (self.m, "m"),
            (self.h, "h"),
            (self.k, "k"),
            (self.filters, "filters"),
            (self.hidden, "hidden width"),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        let input = self.input_extents();
        for a in 0..3 {
            if self.kernel[a] == 0 {
                return Err(ConfigError::Zero("kernel extent"));
            }
            if self.pool[a] == 0 {
                return Err(ConfigError::Zero("pool extent"));
            }
            if self.kernel[a] > input[a] {
                return Err(ConfigError::KernelTooLarge {
                    axis: AXES[a],
                    kernel: self.kernel[a],
                    input: input[a],
                });
            }
        }
        let conv = self.conv_extents();
        for a in 0..3 {
            if self.pool[a] > conv[a] {
                return Err(ConfigError::PoolTooLarge {
                    axis: AXES[a],
                    pool: self.pool[a],
                    output: conv[a],
                });
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let kvol = self.kernel.iter().product::<usize>() * self.channels();
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let conv_w = take(self.filters * kvol);
        let conv_b = take(self.filters);
        let dense_w = take(self.hidden * self.flat_len());
        let dense_b = take(self.hidden);
        let out_w = take(self.h * self.hidden);
        let out_b = take(self.h);
        Layout {
            conv_w,
            conv_b,
            dense_w,
            dense_b,
            out_w,
            out_b,
            total: at,
        }
    }
}

/// Ranges of each tensor within the flat parameter vector. Weights are
/// row-major: conv `[F][kd][kw][ke][k+1]`, dense `[hidden][flat]`, output
/// `[h][hidden]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv_w: std::ops::Range<usize>,
    pub conv_b: std::ops::Range<usize>,
    pub dense_w: std::ops::Range<usize>,
    pub dense_b: std::ops::Range<usize>,
    pub out_w: std::ops::Range<usize>,
    pub out_b: std::ops::Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn named(&self) -> [(&'static str, std::ops::Range<usize>); 6] {
        [
            ("conv_w", self.conv_w.clone()),
            ("conv_b", self.conv_b.clone()),
            ("dense_w", self.dense_w.clone()),
            ("dense_b", self.dense_b.clone()),
            ("out_w", self.out_w.clone()),
            ("out_b", self.out_b.clone()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub values: Vec<f64>,
}

impl ModelParams {
    /// Uniform weights in `±1/sqrt(fan_in)`, zero biases, from `config.seed`.
    pub fn init(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let layout = config.layout();
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let kvol = config.kernel.iter().product::<usize>() * config.channels();
        for (range, fan_in) in [
            (layout.conv_w.clone(), kvol),
            (layout.dense_w.clone(), config.flat_len()),
            (layout.out_w.clone(), config.hidden),
        ] {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(ModelParams { config, values })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(ModelParams {
            config,
            values: vec![0.0; config.layout().total],
        })
    }

    pub fn from_values(config: ModelConfig, values: Vec<f64>) -> Result<Self, ConfigError> {
        config.validate()?;
        let expected = config.layout().total;
        if values.len() != expected {
            return Err(ConfigError::ParamShape {
                expected,
                found: values.len(),
            });
        }
        Ok(ModelParams { config, values })
    }

    pub fn layout(&self) -> Layout {
        self.config.layout()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Forward pass mapped back to price units.
    pub fn predict(&self, input: &[f64], scaler: &PriceScaler) -> Result<Vec<f64>, ConfigError> {
        let (y, _) = forward(self, input)?;
        Ok(y.into_iter().map(|z| scaler.inverse_scale(z)).collect())
    }
}
