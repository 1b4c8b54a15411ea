//! News-headline event extraction and event-aware natural gas price
//! forecasting, with purchasing backtests and diagnostics.

pub mod backtest;
pub mod baseline;
pub mod cli;
pub mod conllu;
pub mod extract;
pub mod ingest;
pub mod manifest;
pub mod model;
pub mod plot;
pub mod predictor;
pub mod synthetic;
pub mod tensor;
pub mod text;
pub mod tfidf;
pub mod vocab;
pub mod wordnet;
