use serde::{Deserialize, Serialize};

use super::{BacktestError, Result, TRADING_DAYS};

/// Metric keys in report order.
pub const METRIC_NAMES: [&str; 6] = ["total_return", "annualized_return", "volatility", "sharpe", "var95", "max_drawdown"];

/// Performance summary of a daily return series; all fractions, not percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_return: f64,
    /// Geometric: `(1 + total)^(252 / n_days) − 1`.
    pub annualized_return: f64,
    pub volatility: f64,
    /// Zero risk-free rate.
    pub sharpe: f64,
    /// 5th percentile of daily returns (negative when losses occur).
    pub var95: f64,
    /// Worst peak-to-trough equity decline, in `[−1, 0]`.
    pub max_drawdown: f64,
}

impl Metrics {
    pub fn values(&self) -> [f64; 6] {
        [
            self.total_return,
            self.annualized_return,
            self.volatility,
            self.sharpe,
            self.var95,
            self.max_drawdown,
        ]
    }
}

/// Linearly interpolated quantile of unsorted data (the "linear" rule:
/// position `p · (m − 1)` in the sorted sample).
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    let h = p * (s.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Single-pass metric state: Welford moments, running equity and peak.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    count: usize,
    mean: f64,
    m2: f64,
    equity: f64,
    peak: f64,
    drawdown: f64,
    samples: Vec<f64>,
}

impl Default for MetricAccumulator {
    fn default() -> Self {
        MetricAccumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            equity: 1.0,
            peak: 1.0,
            drawdown: 0.0,
            samples: Vec::new(),
        }
    }
}

impl MetricAccumulator {
    pub fn push(&mut self, r: f64) -> Result<()> {
        if !r.is_finite() {
            return Err(BacktestError::NonFinite {
                what: "daily return",
                day: self.count,
            });
        }
        self.count += 1;
        let delta = r - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (r - self.mean);
        self.equity *= 1.0 + r;
        self.peak = self.peak.max(self.equity);
        // a levered book can lose more than everything; the drawdown floor is −100%
        self.drawdown = self.drawdown.min((self.equity / self.peak - 1.0).max(-1.0));
        self.samples.push(r);
        Ok(())
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.count < 2 {
            return Err(BacktestError::TooShort {
                needed: 2,
                got: self.count,
            });
        }
        let std = (self.m2 / (self.count - 1) as f64).sqrt();
        if std == 0.0 {
            return Err(BacktestError::ZeroVolatility);
        }
        let total = self.equity - 1.0;
        Ok(Metrics {
            total_return: total,
            annualized_return: if self.equity > 0.0 {
                self.equity.powf(TRADING_DAYS / self.count as f64) - 1.0
            } else {
                -1.0
            },
            volatility: std * TRADING_DAYS.sqrt(),
            sharpe: self.mean / std * TRADING_DAYS.sqrt(),
            var95: quantile(&self.samples, 0.05),
            max_drawdown: self.drawdown,
        })
    }
}

pub fn metrics(returns: &[f64]) -> Result<Metrics> {
    let mut acc = MetricAccumulator::default();
    for &r in returns {
        acc.push(r)?;
    }
    acc.finish()
}
