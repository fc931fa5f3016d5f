//! Portfolio return series, performance metrics and benchmark comparisons.

mod metrics;
mod report;

pub use metrics::{metrics, quantile, MetricAccumulator, Metrics, METRIC_NAMES};
pub use report::{excess_curve, percentage_difference, write_comparison_csv, write_equity_csv, write_excess_csv, BacktestReport, MetricDiff};

use thiserror::Error;

pub const TRADING_DAYS: f64 = 252.0;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("need at least {needed} daily returns, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("Sharpe ratio undefined: daily returns have zero standard deviation")]
    ZeroVolatility,
    #[error("non-finite {what} on day {day}")]
    NonFinite { what: &'static str, day: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// `ret[k] = weights[k]ᵀ · returns[k + 1]`: the allocation decided on one
/// day earns the next day's simple returns. Both slices cover the same
/// dates, so the output is one element shorter.
pub fn portfolio_returns(weights: &[Vec<f64>], returns: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != returns.len() {
        return Err(BacktestError::Misaligned(format!(
            "{} weight rows vs {} return rows",
            weights.len(),
            returns.len()
        )));
    }
    weights
        .iter()
        .zip(returns.iter().skip(1))
        .enumerate()
        .map(|(k, (w, r))| {
            if w.len() != r.len() {
                return Err(BacktestError::Misaligned(format!(
                    "day {k}: {} weights vs {} returns",
                    w.len(),
                    r.len()
                )));
            }
            let v: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(BacktestError::NonFinite {
                    what: "portfolio return",
                    day: k + 1,
                })
            }
        })
        .collect()
}

/// Compounded value path starting at 1.0.
pub fn equity_curve(returns: &[f64]) -> Vec<f64> {
    let mut eq = Vec::with_capacity(returns.len() + 1);
    eq.push(1.0);
    for r in returns {
        eq.push(eq.last().unwrap() * (1.0 + r));
    }
    eq
}
