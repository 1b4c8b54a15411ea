//! Mock purchasing: a daily quota accrues, and the whole outstanding amount
//! is bought on any day whose price is below every forecast price.
//!
//! Debt is tracked in whole quota units (one per day) so volume accounting
//! is exact; a purchase of `n` units has volume `n * T / D`.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{forecast, PredictError, Predictor};
use crate::tensor::DayInput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Volume to buy over the whole horizon, m³.
    pub total_volume: f64,
    /// Purchasing horizon in trading days.
    pub days: usize,
    /// Forecast days that must all exceed today's price.
    pub lookahead: usize,
    /// Buy any remaining debt on the last day regardless of forecasts.
    pub force_final: bool,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            total_volume: 1200.0,
            days: 20,
            lookahead: 10,
            force_final: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("invalid backtest setting: {0}")]
    Setting(&'static str),
    #[error("horizon of {days} days needs {days} prices from the start day, have {have}")]
    TooFewDays { days: usize, have: usize },
    #[error("prediction failed on day {day}: {source}")]
    Predictor {
        day: usize,
        #[source]
        source: PredictError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        if !self.total_volume.is_finite() || self.total_volume <= 0.0 {
            return Err(BacktestError::Setting("total volume must be positive"));
        }
        if self.days == 0 {
            return Err(BacktestError::Setting("horizon must be at least one day"));
        }
        if self.lookahead == 0 {
            return Err(BacktestError::Setting("lookahead must be at least one day"));
        }
        Ok(())
    }

    pub fn daily_quota(&self) -> f64 {
        self.total_volume / self.days as f64
    }

    fn volume(&self, units: u64) -> f64 {
        units as f64 * self.total_volume / self.days as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Purchase {
    /// Index within the purchasing horizon.
    pub day: usize,
    pub date: NaiveDate,
    /// Quota days covered by this purchase.
    pub units: u64,
    pub volume: f64,
    pub price: f64,
}

impl Purchase {
    pub fn cost(&self) -> f64 {
        self.volume * self.price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PurchaseLedger {
    pub config: BacktestConfig,
    pub dates: Vec<NaiveDate>,
    pub purchases: Vec<Purchase>,
    /// Outstanding quota units at the end of each day.
    pub debt_units: Vec<u64>,
}

impl PurchaseLedger {
    /// Outstanding m³ at the end of each day.
    pub fn debt(&self) -> Vec<f64> {
        self.debt_units.iter().map(|&u| self.config.volume(u)).collect()
    }

    pub fn total_volume(&self) -> f64 {
        self.purchases.iter().map(|p| p.volume).sum()
    }

    /// Accrued units equal bought units plus debt, on every day.
    pub fn conserves_volume(&self) -> bool {
        let mut bought = 0u64;
        let mut next = self.purchases.iter().peekable();
        for (d, &debt) in self.debt_units.iter().enumerate() {
            while let Some(p) = next.next_if(|p| p.day == d) {
                bought += p.units;
            }
            if bought + debt != d as u64 + 1 {
                return false;
            }
        }
        next.peek().is_none()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "volume", "price", "cost"])
            .map_err(csv_io)?;
        for p in &self.purchases {
            w.write_record([
                p.date.to_string(),
                format!("{:.6}", p.volume),
                format!("{:.6}", p.price),
                format!("{:.6}", p.cost()),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> BacktestError {
    BacktestError::Io(std::io::Error::other(e))
}

/// Day-by-day simulation over the first `config.days` entries of `prices`.
/// `fire(d)` decides whether day `d` buys.
pub fn simulate<F>(
    prices: &[(NaiveDate, f64)],
    config: &BacktestConfig,
    mut fire: F,
) -> Result<PurchaseLedger, BacktestError>
where
    F: FnMut(usize) -> Result<bool, BacktestError>,
{
    config.validate()?;
    if prices.len() < config.days {
        return Err(BacktestError::TooFewDays {
            days: config.days,
            have: prices.len(),
        });
    }
    let mut purchases = Vec::new();
    let mut debt_units = Vec::with_capacity(config.days);
    let mut debt = 0u64;
    for (d, &(date, price)) in prices[..config.days].iter().enumerate() {
        debt += 1;
        let last = d + 1 == config.days;
        if fire(d)? || (last && config.force_final) {
            purchases.push(Purchase {
                day: d,
                date,
                units: debt,
                volume: config.volume(debt),
                price,
            });
            debt = 0;
        }
        debt_units.push(debt);
    }
    Ok(PurchaseLedger {
        config: *config,
        dates: prices[..config.days].iter().map(|p| p.0).collect(),
        purchases,
        debt_units,
    })
}

/// Runs the forecast rule from `days[start]` on. Each day sees history up
/// to and including itself.
pub fn run_backtest<P: Predictor + ?Sized>(
    days: &[DayInput],
    start: usize,
    predictor: &P,
    config: &BacktestConfig,
) -> Result<PurchaseLedger, BacktestError> {
    let window = &days[start.min(days.len())..];
    let prices: Vec<(NaiveDate, f64)> = window.iter().map(|d| (d.date, d.price)).collect();
    simulate(&prices, config, |d| {
        let today = start + d;
        let y = forecast(predictor, &days[..=today], config.lookahead)
            .map_err(|source| BacktestError::Predictor { day: d, source })?;
        Ok(y.iter().all(|&p| days[today].price < p))
    })
}

/// Equal purchase of `T / D` every day.
pub fn baseline_ledger(
    prices: &[(NaiveDate, f64)],
    config: &BacktestConfig,
) -> Result<PurchaseLedger, BacktestError> {
    simulate(prices, config, |_| Ok(true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostReport {
    pub purchases: usize,
    pub total_volume: f64,
    pub total_cost: f64,
    pub weighted_average: f64,
    pub unweighted_average: f64,
    pub outstanding: f64,
}

pub fn report(ledger: &PurchaseLedger) -> CostReport {
    let outstanding = ledger.debt().last().copied().unwrap_or(0.0);
    if ledger.purchases.is_empty() {
        log::warn!("ledger has no purchases; averages reported as zero");
        return CostReport {
            purchases: 0,
            total_volume: 0.0,
            total_cost: 0.0,
            weighted_average: 0.0,
            unweighted_average: 0.0,
            outstanding,
        };
    }
    let n = ledger.purchases.len();
    let total_volume = ledger.total_volume();
    let total_cost: f64 = ledger.purchases.iter().map(Purchase::cost).sum();
    CostReport {
        purchases: n,
        total_volume,
        total_cost,
        weighted_average: total_cost / total_volume,
        unweighted_average: ledger.purchases.iter().map(|p| p.price).sum::<f64>() / n as f64,
        outstanding,
    }
}

impl CostReport {
    /// Flat `key = value` block.
    pub fn to_text(&self, label: &str) -> String {
        format!(
            "[{label}]\npurchases = {}\ntotal_volume = {:.6}\ntotal_cost = {:.6}\n\
             weighted_average = {:.6}\nunweighted_average = {:.6}\noutstanding = {:.6}\n",
            self.purchases,
            self.total_volume,
            self.total_cost,
            self.weighted_average,
            self.unweighted_average,
            self.outstanding
        )
    }
}
