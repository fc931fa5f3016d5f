use std::ops::Range;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    assemble_batch, batch_loss, forward, predict_weights, Adam, GraphSource, ModelConfig, ModelError, ModelParams,
    ParamVars, Result,
};
use crate::autodiff::Graph;
use crate::data::MergedPanel;
use crate::features::ModelInputs;

const TRADING_DAYS: f64 = 252.0;

/// Per-day realized returns and trailing covariances for the loss.
#[derive(Debug, Clone)]
pub struct LossTargets {
    pub n_assets: usize,
    /// `daily[t]`: simple return from `t − 1` to `t` (zeros on day 0).
    pub daily: Vec<Vec<f64>>,
    /// Sample covariance (row-major `n × n`) of the `window` returns ending
    /// at `t`; `None` until enough returns exist.
    pub cov: Vec<Option<Vec<f64>>>,
    pub window: usize,
}

impl LossTargets {
    pub fn new(panel: &MergedPanel, window: usize) -> Self {
        let (n, days) = (panel.n_assets(), panel.n_days());
        let mut daily = vec![vec![0.0; n]];
        daily.extend((1..days).map(|t| panel.simple_returns(t)));
        let cov = (0..days)
            .map(|t| (t >= window).then(|| sample_covariance(&daily[t + 1 - window..=t])))
            .collect();
        LossTargets { n_assets: n, daily, cov, window }
    }

    /// Return vector realized the day after deciding at `t`.
    pub fn next(&self, t: usize) -> &[f64] {
        &self.daily[t + 1]
    }
}

fn sample_covariance(rows: &[Vec<f64>]) -> Vec<f64> {
    let (m, n) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (m - 1) as f64;
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }
    cov
}

/// Everything the training loop reads.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub inputs: ModelInputs,
    pub targets: LossTargets,
    pub graphs: GraphSource,
}

impl TrainingData {
    /// Decision days in `range` with a full window, a covariance estimate,
    /// and a next-day return that stays inside `range`.
    pub fn eligible(&self, range: Range<usize>, lookback: usize) -> Vec<usize> {
        let first = self.inputs.first_window_day(lookback).max(self.targets.window);
        range.clone().filter(|&t| t >= first && t + 1 < range.end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-date loss across the epoch's kept dates.
    pub train_loss: f64,
    pub val_sharpe: Option<f64>,
    /// Dates dropped as degenerate allocations.
    pub skipped: usize,
    /// Set when a non-finite value cut the epoch short.
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation snapshot (last epoch when there is no validation).
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of `params`; 0 means the initial parameters.
    pub best_epoch: usize,
    pub best_val_sharpe: Option<f64>,
}

/// `mean / std · √252` with the sample deviation; 0 when undefined.
pub fn annualized_sharpe(returns: &[f64]) -> f64 {
    if returns.len() < 2 {
        return 0.0;
    }
    let m = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / m;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
    if var <= 0.0 {
        0.0
    } else {
        mean / var.sqrt() * TRADING_DAYS.sqrt()
    }
}

fn validation_sharpe(params: &ModelParams, config: &ModelConfig, data: &mut TrainingData, val: Range<usize>) -> Result<f64> {
    let w = predict_weights(params, config, &data.inputs, &mut data.graphs, val)?;
    Ok(annualized_sharpe(&w.realized(&data.targets.daily)))
}

/// One pass of mini-batch Adam; returns (mean loss, skipped, aborted).
fn run_epoch(
    params: &mut ModelParams,
    opt: &mut Adam,
    config: &ModelConfig,
    data: &mut TrainingData,
    dates: &[usize],
    anchor: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize, bool)> {
    let (mut total, mut kept, mut skipped) = (0.0, 0usize, 0usize);
    for chunk in dates.chunks(config.batch_size) {
        let batch = assemble_batch(&data.inputs, chunk, config.lookback, &mut data.graphs, anchor, config.edge_bias)?;
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, params, true)?;
        let step = (|| -> Result<Option<(f64, usize, usize, Vec<Vec<f64>>)>> {
            let out = forward(&mut g, &vars, config, &batch, true, rng)?;
            let returns: Vec<&[f64]> = chunk.iter().map(|&t| data.targets.next(t)).collect();
            let covs: Vec<&[f64]> = chunk
                .iter()
                .map(|&t| data.targets.cov[t].as_deref().expect("eligible dates have a covariance"))
                .collect();
            let l = batch_loss(&mut g, &out, &returns, &covs, config.variance_floor)?;
            let Some(loss) = l.loss else {
                return Ok(None);
            };
            let value = g.value(loss).item()?;
            let grads = g.backward(loss)?;
            let grads = vars.vars.iter().map(|v| grads.wrt(*v).into_data()).collect();
            Ok(Some((value, l.kept, l.skipped, grads)))
        })();
        match step {
            Ok(Some((value, k, s, grads))) => {
                if let Err(e) = opt.step(params, &grads) {
                    warn!("aborting epoch: {e}");
                    return Ok((mean_or_nan(total, kept), skipped + s, true));
                }
                total += value * k as f64;
                kept += k;
                skipped += s;
            }
            Ok(None) => skipped += chunk.len(),
            Err(ModelError::Autodiff(e)) => {
                warn!("aborting epoch: {e}");
                return Ok((mean_or_nan(total, kept), skipped, true));
            }
            Err(e) => return Err(e),
        }
    }
    if skipped > 0 {
        warn!("{skipped} degenerate training dates skipped");
    }
    Ok((mean_or_nan(total, kept), skipped, false))
}

fn mean_or_nan(total: f64, kept: usize) -> f64 {
    if kept == 0 {
        f64::NAN
    } else {
        total / kept as f64
    }
}

/// Trains on decision days in `fit` and, when `val` is given, keeps the
/// epoch with the best validation Sharpe. Dynamic graphs are anchored at
/// `fit.start`.
pub fn train(config: &ModelConfig, data: &mut TrainingData, fit: Range<usize>, val: Option<Range<usize>>) -> Result<TrainOutcome> {
    config.validate()?;
    if data.inputs.dim != config.input_dim() {
        return Err(ModelError::FeatureMismatch {
            expected: config.input_dim(),
            got: data.inputs.dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(config, &mut rng);
    let mut outcome = TrainOutcome {
        params: params.clone(),
        history: Vec::new(),
        best_epoch: 0,
        best_val_sharpe: None,
    };
    if config.epochs == 0 {
        return Ok(outcome);
    }
    let mut dates = data.eligible(fit.clone(), config.lookback);
    if dates.is_empty() {
        return Err(ModelError::NoEligibleDates {
            start: fit.start,
            end: fit.end,
        });
    }
    let mut opt = Adam::new(config, &params);
    for epoch in 1..=config.epochs {
        dates.shuffle(&mut rng);
        let (train_loss, skipped, aborted) = run_epoch(&mut params, &mut opt, config, data, &dates, fit.start, &mut rng)?;
        let val_sharpe = match &val {
            Some(v) => Some(validation_sharpe(&params, config, data, v.clone())?),
            None => None,
        };
        info!(
            "epoch {epoch}: train loss {train_loss:.6}, val sharpe {}",
            val_sharpe.map_or("-".into(), |s| format!("{s:.4}"))
        );
        let better = match (val_sharpe, outcome.best_val_sharpe) {
            (None, _) => true,
            (Some(s), None) => s.is_finite(),
            (Some(s), Some(best)) => s > best,
        };
        if better {
            outcome.params = params.clone();
            outcome.best_epoch = epoch;
            outcome.best_val_sharpe = val_sharpe;
        }
        outcome.history.push(EpochRecord {
            epoch,
            train_loss,
            val_sharpe,
            skipped,
            aborted,
        });
    }
    Ok(outcome)
}
