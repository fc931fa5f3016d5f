//! Benchmark allocations: daily-rebalanced equal weight and a rolling
//! CAPM mean-variance portfolio.

mod capm;
mod solver;

pub use capm::{capm_expected_returns, capm_mvo_backtest, estimate_beta, CapmConfig, CapmEstimate, CapmMvoOutcome, Rebalance};
pub use solver::{gmv, max_sharpe, project_capped_simplex, Bounds, MvoSolution, SolveStatus, SolverOptions};

use std::ops::Range;

use thiserror::Error;

use crate::model::WeightMatrix;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("need {needed} return observations ending at day {end}, have {have}")]
    InsufficientHistory { needed: usize, have: usize, end: usize },
    #[error("market excess returns have zero variance")]
    ZeroMarketVariance,
    #[error("no asset has expected return above the risk-free rate {rf}")]
    NoPositiveExcess { rf: f64 },
    #[error("bounds [{lo}, {hi}] admit no fully invested portfolio of {n} assets")]
    InfeasibleBounds { lo: f64, hi: f64, n: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// `1/n` on every day of `days`.
pub fn equal_weight(n: usize, days: Range<usize>) -> WeightMatrix {
    let n = n.max(1);
    WeightMatrix {
        weights: vec![vec![1.0 / n as f64; n]; days.len()],
        days: days.collect(),
        fallbacks: Vec::new(),
    }
}

/// Day-indexed simple returns of a level series; day 0 is zero.
pub fn returns_from_levels(levels: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; levels.len()];
    for t in 1..levels.len() {
        out[t] = levels[t] / levels[t - 1] - 1.0;
    }
    out
}

#[cfg(test)]
mod tests;
