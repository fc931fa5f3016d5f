use std::ops::Range;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{gmv, max_sharpe, BaselineError, Bounds, MvoSolution, Result, SolveStatus, SolverOptions};
use crate::model::WeightMatrix;

const TRADING_DAYS: f64 = 252.0;

/// OLS slope of `asset` on `market` over the `window` observations ending
/// at index `end` (inclusive).
pub fn estimate_beta(asset: &[f64], market: &[f64], window: usize, end: usize) -> Result<f64> {
    if asset.len() != market.len() {
        return Err(BaselineError::Shape(format!("{} asset vs {} market returns", asset.len(), market.len())));
    }
    if window < 2 || end >= asset.len() || end + 1 < window {
        return Err(BaselineError::InsufficientHistory {
            needed: window,
            have: (end + 1).min(asset.len()),
            end,
        });
    }
    let (a, m) = (&asset[end + 1 - window..=end], &market[end + 1 - window..=end]);
    let k = window as f64;
    let (ma, mm) = (a.iter().sum::<f64>() / k, m.iter().sum::<f64>() / k);
    let cov: f64 = a.iter().zip(m).map(|(x, y)| (x - ma) * (y - mm)).sum();
    let var: f64 = m.iter().map(|y| (y - mm) * (y - mm)).sum();
    // rounding in the mean leaves a constant series with a tiny residual
    if !(var > f64::EPSILON * m.iter().map(|y| y * y).sum::<f64>()) {
        return Err(BaselineError::ZeroMarketVariance);
    }
    let beta = cov / var;
    if beta.is_finite() {
        Ok(beta)
    } else {
        Err(BaselineError::NonFinite("beta"))
    }
}

/// `E[Rᵢ] = R_f + βᵢ (E[R_m] − R_f)`.
pub fn capm_expected_returns(betas: &[f64], rf: f64, market_return: f64) -> Vec<f64> {
    betas.iter().map(|b| rf + b * (market_return - rf)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CapmConfig {
    pub window: usize,
    pub rebalance: usize,
    pub bounds: Bounds,
    /// Regress log rather than simple excess returns.
    pub log_returns: bool,
    pub seed: u64,
}

impl Default for CapmConfig {
    fn default() -> Self {
        CapmConfig {
            window: 252,
            rebalance: 21,
            bounds: Bounds::default(),
            log_returns: false,
            seed: 0,
        }
    }
}

/// Inputs of one rebalance; every return figure annualized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapmEstimate {
    pub betas: Vec<f64>,
    pub expected: Vec<f64>,
    /// Annualized window means, the fallback expected returns.
    pub historical: Vec<f64>,
    pub rf: f64,
    pub market_return: f64,
}

impl CapmEstimate {
    /// Estimates on the `window` daily returns ending at day `t`.
    /// `asset_returns[d]` and `market_returns[d]` are simple returns realized
    /// on day `d`; `riskfree[d]` is an annualized yield.
    pub fn at(asset_returns: &[Vec<f64>], market_returns: &[f64], riskfree: &[f64], t: usize, config: &CapmConfig) -> Result<Self> {
        let w = config.window;
        // day 0 has no return
        if t < w || t >= asset_returns.len() {
            return Err(BaselineError::InsufficientHistory {
                needed: w,
                have: t.min(asset_returns.len().saturating_sub(1)),
                end: t,
            });
        }
        let days = t + 1 - w..t + 1;
        let n = asset_returns[t].len();
        let tf = |r: f64| if config.log_returns { r.ln_1p() } else { r };
        let rf_daily: Vec<f64> = days.clone().map(|d| riskfree[d] / TRADING_DAYS).collect();
        let mkt: Vec<f64> = days.clone().zip(&rf_daily).map(|(d, rf)| tf(market_returns[d]) - rf).collect();
        let mut betas = Vec::with_capacity(n);
        let mut historical = Vec::with_capacity(n);
        for a in 0..n {
            let ex: Vec<f64> = days.clone().zip(&rf_daily).map(|(d, rf)| tf(asset_returns[d][a]) - rf).collect();
            betas.push(estimate_beta(&ex, &mkt, w, w - 1)?);
            historical.push(days.clone().map(|d| asset_returns[d][a]).sum::<f64>() / w as f64 * TRADING_DAYS);
        }
        let market_return = days.clone().map(|d| market_returns[d]).sum::<f64>() / w as f64 * TRADING_DAYS;
        let rf = riskfree[t];
        Ok(CapmEstimate {
            expected: capm_expected_returns(&betas, rf, market_return),
            betas,
            historical,
            rf,
            market_return,
        })
    }
}

fn annualized_covariance(asset_returns: &[Vec<f64>], days: Range<usize>) -> Vec<f64> {
    let n = asset_returns[days.start].len();
    let m = days.len() as f64;
    let mean: Vec<f64> = (0..n).map(|a| days.clone().map(|d| asset_returns[d][a]).sum::<f64>() / m).collect();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = days
                .clone()
                .map(|d| (asset_returns[d][i] - mean[i]) * (asset_returns[d][j] - mean[j]))
                .sum::<f64>()
                / (m - 1.0)
                * TRADING_DAYS;
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }
    cov
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rebalance {
    pub day: usize,
    /// Historical-mean fallback when CAPM returns were replaced, otherwise
    /// the solver outcome.
    pub status: SolveStatus,
    pub solver: SolveStatus,
    pub sharpe: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapmMvoOutcome {
    pub weights: WeightMatrix,
    pub rebalances: Vec<Rebalance>,
}

/// Rolling CAPM mean-variance strategy over `days`: re-solved on the first
/// day and every `rebalance` days after, held constant in between. Inputs
/// are indexed by day as in [`CapmEstimate::at`]; only data up to each
/// rebalance day is read.
pub fn capm_mvo_backtest(
    asset_returns: &[Vec<f64>],
    market_returns: &[f64],
    riskfree: &[f64],
    days: Range<usize>,
    config: &CapmConfig,
) -> Result<CapmMvoOutcome> {
    if market_returns.len() != asset_returns.len() || riskfree.len() != asset_returns.len() {
        return Err(BaselineError::Shape("asset, market and risk-free series differ in length".into()));
    }
    if days.is_empty() || days.end > asset_returns.len() {
        return Err(BaselineError::Shape(format!("day range {days:?} outside {} days", asset_returns.len())));
    }
    let opts = SolverOptions {
        seed: config.seed,
        ..SolverOptions::default()
    };
    let period = config.rebalance.max(1);
    let mut weights = Vec::with_capacity(days.len());
    let mut rebalances = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    for t in days.clone() {
        if (t - days.start) % period == 0 {
            let est = CapmEstimate::at(asset_returns, market_returns, riskfree, t, config)?;
            let reverted = est.expected.iter().all(|&e| e <= est.rf);
            let mu = if reverted { &est.historical } else { &est.expected };
            let sigma = annualized_covariance(asset_returns, t + 1 - config.window..t + 1);
            let n = mu.len();
            let sol: MvoSolution = match max_sharpe(mu, &sigma, est.rf, config.bounds, &opts) {
                Ok(s) => s,
                Err(e) => {
                    debug!("day {t}: max-Sharpe failed ({e}), using minimum variance");
                    gmv(&sigma, n, config.bounds, &opts)?
                }
            };
            if !sol.converged {
                warn!("day {t}: portfolio solver hit its iteration cap");
            }
            let sharpe = (sol.weights.iter().zip(mu).map(|(w, m)| w * m).sum::<f64>() - est.rf) / sol.variance.sqrt();
            rebalances.push(Rebalance {
                day: t,
                status: if reverted { SolveStatus::HistoricalMeanFallback } else { sol.status },
                solver: sol.status,
                sharpe,
                converged: sol.converged,
            });
            current = sol.weights;
        }
        weights.push(current.clone());
    }
    Ok(CapmMvoOutcome {
        weights: WeightMatrix {
            days: days.collect(),
            weights,
            fallbacks: Vec::new(),
        },
        rebalances,
    })
}
