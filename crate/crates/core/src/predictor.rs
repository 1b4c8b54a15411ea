//! Common interface over the forecasting models, plus recursive lookahead.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baseline::{persistence_predict, BaselineError, LinearArParams};
use crate::model::{Checkpoint, ConfigError};
use crate::tensor::{build_day, day_seed, DayInput};
use crate::vocab::{EmbeddingTable, Vocabulary};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("need {needed} days of history, have {have}")]
    ShortHistory { needed: usize, have: usize },
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Model(#[from] ConfigError),
    #[error("embedding dimension {table} does not match model k={model}")]
    Dimension { table: usize, model: usize },
    #[error("{0}")]
    Other(String),
}

/// Maps the most recent days (oldest first, last element is today) to the
/// next `horizon()` prices in EUR/m³.
pub trait Predictor {
    fn name(&self) -> &str;
    /// Days of history consumed.
    fn window(&self) -> usize;
    fn horizon(&self) -> usize;
    fn predict(&self, history: &[DayInput]) -> Result<Vec<f64>, PredictError>;
}

fn tail(history: &[DayInput], n: usize) -> Result<&[DayInput], PredictError> {
    if history.len() < n {
        return Err(PredictError::ShortHistory {
            needed: n,
            have: history.len(),
        });
    }
    Ok(&history[history.len() - n..])
}

pub struct Persistence {
    pub h: usize,
}

impl Predictor for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn window(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        self.h
    }

    fn predict(&self, history: &[DayInput]) -> Result<Vec<f64>, PredictError> {
        let p: Vec<f64> = tail(history, 1)?.iter().map(|d| d.price).collect();
        Ok(persistence_predict(&p, self.h)?)
    }
}

pub struct LinearAr {
    pub params: LinearArParams,
}

impl Predictor for LinearAr {
    fn name(&self) -> &str {
        "linear-ar"
    }

    fn window(&self) -> usize {
        self.params.m
    }

    fn horizon(&self) -> usize {
        self.params.h
    }

    fn predict(&self, history: &[DayInput]) -> Result<Vec<f64>, PredictError> {
        let p: Vec<f64> = tail(history, self.params.m)?.iter().map(|d| d.price).collect();
        Ok(self.params.predict(&p)?)
    }
}

pub struct C3d {
    pub checkpoint: Checkpoint,
    pub table: EmbeddingTable,
    pub vocab: Vocabulary,
}

impl C3d {
    pub fn new(
        checkpoint: Checkpoint,
        table: EmbeddingTable,
        vocab: Vocabulary,
    ) -> Result<Self, PredictError> {
        let k = checkpoint.params.config.k;
        if table.dim() != k {
            return Err(PredictError::Dimension {
                table: table.dim(),
                model: k,
            });
        }
        Ok(C3d {
            checkpoint,
            table,
            vocab,
        })
    }

    /// Stacked input for the last `m` days, built exactly as in training.
    pub fn input(&self, history: &[DayInput]) -> Result<Vec<f64>, PredictError> {
        let m = self.checkpoint.params.config.m;
        let mut input = Vec::with_capacity(self.checkpoint.params.config.input_len());
        for d in tail(history, m)? {
            let mut rng = ChaCha8Rng::seed_from_u64(day_seed(self.checkpoint.tensor_seed, d.date));
            let t = build_day(
                d.date,
                &d.events,
                self.checkpoint.scaler.scale(d.price),
                &self.table,
                &self.vocab,
                &mut rng,
            );
            input.extend_from_slice(&t.data);
        }
        Ok(input)
    }
}

impl Predictor for C3d {
    fn name(&self) -> &str {
        "c3d"
    }

    fn window(&self) -> usize {
        self.checkpoint.params.config.m
    }

    fn horizon(&self) -> usize {
        self.checkpoint.params.config.h
    }

    fn predict(&self, history: &[DayInput]) -> Result<Vec<f64>, PredictError> {
        let x = self.input(history)?;
        Ok(self
            .checkpoint
            .params
            .predict(&x, &self.checkpoint.scaler)?)
    }
}

/// Next weekday after `date`.
pub fn next_weekday(date: NaiveDate) -> NaiveDate {
    let mut d = date + Days::new(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d + Days::new(1);
    }
    d
}

/// `lookahead` future prices. When the predictor's horizon is shorter, its
/// own forecasts are appended as event-free days and it is run again.
pub fn forecast<P: Predictor + ?Sized>(
    predictor: &P,
    history: &[DayInput],
    lookahead: usize,
) -> Result<Vec<f64>, PredictError> {
    let h = predictor.horizon();
    if h == 0 {
        return Err(PredictError::Other("predictor horizon is zero".into()));
    }
    let need = predictor.window();
    let mut ctx: Vec<DayInput> = tail(history, need)?.to_vec();
    let mut out = Vec::with_capacity(lookahead);
    while out.len() < lookahead {
        let step = predictor.predict(&ctx)?;
        for &p in step.iter().take(lookahead - out.len()) {
            out.push(p);
            let date = next_weekday(ctx.last().map(|d| d.date).unwrap_or(NaiveDate::MIN));
            ctx.push(DayInput {
                date,
                price: p,
                events: Vec::new(),
            });
        }
        let drop = ctx.len() - need;
        ctx.drain(..drop);
    }
    Ok(out)
}
