//! Persistence and ridge autoregression over raw price windows.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("price window is empty")]
    EmptyWindow,
    #[error("no training windows")]
    NoSamples,
    #[error("window has {found} prices, expected {expected}")]
    Shape { expected: usize, found: usize },
    #[error("ridge penalty must be finite and non-negative")]
    BadPenalty,
    #[error("normal matrix is singular; use a positive ridge penalty")]
    Singular,
}

/// Repeats the last observed price `h` times.
pub fn persistence_predict(window: &[f64], h: usize) -> Result<Vec<f64>, BaselineError> {
    let last = *window.last().ok_or(BaselineError::EmptyWindow)?;
    Ok(vec![last; h])
}

/// Stride-1 `(m prices, next h prices)` pairs.
pub fn price_windows(prices: &[f64], m: usize, h: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    if m == 0 || h == 0 || prices.len() < m + h {
        return Vec::new();
    }
    (0..=prices.len() - m - h)
        .map(|t| (prices[t..t + m].to_vec(), prices[t + m..t + m + h].to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArParams {
    pub m: usize,
    pub h: usize,
    pub lambda: f64,
    /// Row-major `[h][m]`.
    pub weights: Vec<f64>,
    pub intercept: Vec<f64>,
}

impl LinearArParams {
    pub fn predict(&self, window: &[f64]) -> Result<Vec<f64>, BaselineError> {
        if window.len() != self.m {
            return Err(BaselineError::Shape {
                expected: self.m,
                found: window.len(),
            });
        }
        Ok((0..self.h)
            .map(|o| {
                self.intercept[o]
                    + self.weights[o * self.m..(o + 1) * self.m]
                        .iter()
                        .zip(window)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect())
    }
}

/// Ridge least squares with an unpenalized intercept, one output per
/// horizon day.
pub fn fit_linear_ar(
    samples: &[(Vec<f64>, Vec<f64>)],
    lambda: f64,
) -> Result<LinearArParams, BaselineError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(BaselineError::BadPenalty);
    }
    let (first_x, first_y) = samples.first().ok_or(BaselineError::NoSamples)?;
    let (m, h) = (first_x.len(), first_y.len());
    if m == 0 {
        return Err(BaselineError::EmptyWindow);
    }
    let n = samples.len();
    for (x, y) in samples {
        if x.len() != m {
            return Err(BaselineError::Shape { expected: m, found: x.len() });
        }
        if y.len() != h {
            return Err(BaselineError::Shape { expected: h, found: y.len() });
        }
    }
    let x = DMatrix::from_fn(n, m, |r, c| samples[r].0[c]);
    let y = DMatrix::from_fn(n, h, |r, c| samples[r].1[c]);
    let x_mean = x.row_mean();
    let y_mean = y.row_mean();
    let xc = DMatrix::from_fn(n, m, |r, c| x[(r, c)] - x_mean[c]);
    let yc = DMatrix::from_fn(n, h, |r, c| y[(r, c)] - y_mean[c]);

    let gram = xc.transpose() * &xc;
    if lambda == 0.0 {
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if max.is_nan() || max <= 0.0 || min <= max * 1e-12 {
            return Err(BaselineError::Singular);
        }
    }
    let a = gram + DMatrix::identity(m, m) * lambda;
    let chol = a.cholesky().ok_or(BaselineError::Singular)?;
    let w = chol.solve(&(xc.transpose() * yc)); // m x h
    let weights = (0..h)
        .flat_map(|o| (0..m).map(move |c| (o, c)))
        .map(|(o, c)| w[(c, o)])
        .collect();
    let intercept = (0..h)
        .map(|o| y_mean[o] - (0..m).map(|c| w[(c, o)] * x_mean[c]).sum::<f64>())
        .collect();
    Ok(LinearArParams {
        m,
        h,
        lambda,
        weights,
        intercept,
    })
}
