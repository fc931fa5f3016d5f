//! Seeded random search over model hyperparameters, selected by
//! validation Sharpe, with a final retrain on the full training block.

use std::io::Write;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Splits;
use crate::model::{train, ModelConfig, ModelError, TrainOutcome, TrainingData};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("all {0} trials failed")]
    AllFailed(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, SearchError>;

/// `lo, lo + step, …, hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stepped {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Stepped {
    fn levels(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    fn at(&self, k: usize) -> f64 {
        // snap to the grid so 0.1 + 3·0.05 prints as 0.25
        ((self.lo + k as f64 * self.step) * 1e10).round() / 1e10
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.at(rng.random_range(0..self.levels()))
    }

    pub fn contains(&self, v: f64) -> bool {
        let k = ((v - self.lo) / self.step).round();
        k >= 0.0 && (k as usize) < self.levels() && (self.at(k as usize) - v).abs() < 1e-9
    }
}

/// `exp(U(ln lo, ln hi))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogUniform {
    pub lo: f64,
    pub hi: f64,
}

impl LogUniform {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.lo.ln()..=self.hi.ln()).exp()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo * (1.0 - 1e-12) && v <= self.hi * (1.0 + 1e-12)
    }
}

/// The tuned hyperparameters; everything else comes from a base config.
/// Bidirectionality, GAT depth and head count are fixed and never sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub batch_size: Vec<usize>,
    pub lstm_hidden: Stepped,
    pub lstm_layers: Stepped,
    pub lstm_dropout: Stepped,
    pub gat_hidden: Stepped,
    pub gat_dropout: Stepped,
    pub gat_alpha: Stepped,
    pub final_dropout: Stepped,
    pub learning_rate: LogUniform,
    pub lstm_weight_decay: LogUniform,
    pub gat_weight_decay: LogUniform,
    pub final_weight_decay: LogUniform,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let s = |lo, hi, step| Stepped { lo, hi, step };
        let decay = LogUniform { lo: 1e-6, hi: 1e-2 };
        SearchSpace {
            batch_size: vec![16, 32, 64],
            lstm_hidden: s(32.0, 128.0, 16.0),
            lstm_layers: s(1.0, 3.0, 1.0),
            lstm_dropout: s(0.0, 0.5, 0.05),
            gat_hidden: s(32.0, 128.0, 16.0),
            gat_dropout: s(0.1, 0.5, 0.05),
            gat_alpha: s(0.05, 0.3, 0.05),
            final_dropout: s(0.1, 0.5, 0.05),
            learning_rate: LogUniform { lo: 1e-4, hi: 1e-2 },
            lstm_weight_decay: decay,
            gat_weight_decay: decay,
            final_weight_decay: decay,
        }
    }
}

impl SearchSpace {
    /// Whether every tuned field of `c` lies in its domain and the fixed
    /// fields hold their required values.
    pub fn contains(&self, c: &ModelConfig) -> bool {
        self.batch_size.contains(&c.batch_size)
            && self.lstm_hidden.contains(c.lstm_hidden as f64)
            && self.lstm_layers.contains(c.lstm_layers as f64)
            && self.lstm_dropout.contains(c.lstm_dropout)
            && self.gat_hidden.contains(c.gat_hidden as f64)
            && self.gat_dropout.contains(c.gat_dropout)
            && self.gat_alpha.contains(c.gat_alpha)
            && self.final_dropout.contains(c.final_dropout)
            && self.learning_rate.contains(c.learning_rate)
            && self.lstm_weight_decay.contains(c.lstm_weight_decay)
            && self.gat_weight_decay.contains(c.gat_weight_decay)
            && self.final_weight_decay.contains(c.final_weight_decay)
            && !c.lstm_bidirectional
            && c.gat_layers == 2
            && c.gat_heads == 1
    }
}

/// Draws the tuned fields; the rest are copied from `base`.
pub fn sample_config(space: &SearchSpace, base: &ModelConfig, rng: &mut impl Rng) -> ModelConfig {
    ModelConfig {
        batch_size: space.batch_size[rng.random_range(0..space.batch_size.len())],
        lstm_hidden: space.lstm_hidden.sample(rng) as usize,
        lstm_layers: space.lstm_layers.sample(rng) as usize,
        lstm_dropout: space.lstm_dropout.sample(rng),
        gat_hidden: space.gat_hidden.sample(rng) as usize,
        gat_dropout: space.gat_dropout.sample(rng),
        gat_alpha: space.gat_alpha.sample(rng),
        final_dropout: space.final_dropout.sample(rng),
        learning_rate: space.learning_rate.sample(rng),
        lstm_weight_decay: space.lstm_weight_decay.sample(rng),
        gat_weight_decay: space.gat_weight_decay.sample(rng),
        final_weight_decay: space.final_weight_decay.sample(rng),
        lstm_bidirectional: false,
        gat_layers: 2,
        gat_heads: 1,
        ..base.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub config: ModelConfig,
    /// Best validation Sharpe over the trial's epochs.
    pub val_sharpe: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialRecord,
    /// In trial order.
    pub trials: Vec<TrialRecord>,
}

impl SearchOutcome {
    /// Trials by descending validation Sharpe; failures last; ties by index.
    pub fn ranked(&self) -> Vec<&TrialRecord> {
        let mut r: Vec<&TrialRecord> = self.trials.iter().collect();
        r.sort_by(|a, b| rank_key(b).total_cmp(&rank_key(a)).then(a.trial.cmp(&b.trial)));
        r
    }
}

fn rank_key(t: &TrialRecord) -> f64 {
    t.val_sharpe.filter(|s| s.is_finite()).unwrap_or(f64::NEG_INFINITY)
}

/// One trial: config sampled from a generator seeded with `seed`, which
/// also seeds training.
pub fn run_trial(data: &mut TrainingData, splits: &Splits, space: &SearchSpace, base: &ModelConfig, trial: usize, seed: u64) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = sample_config(space, base, &mut rng);
    config.seed = seed;
    let result = train(&config, data, splits.train.clone(), Some(splits.val.clone()));
    match result {
        Ok(out) => TrialRecord {
            trial,
            seed,
            val_sharpe: out.best_val_sharpe,
            best_epoch: out.best_epoch,
            epochs_run: out.history.len(),
            error: None,
            config,
        },
        Err(e) => {
            warn!("trial {trial} failed: {e}");
            TrialRecord {
                trial,
                seed,
                config,
                val_sharpe: None,
                best_epoch: 0,
                epochs_run: 0,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs `n_trials` trials with seeds `seed + trial` and returns the one
/// with the highest validation Sharpe.
pub fn search(data: &mut TrainingData, splits: &Splits, space: &SearchSpace, base: &ModelConfig, n_trials: usize, seed: u64) -> Result<SearchOutcome> {
    if n_trials == 0 {
        return Err(SearchError::NoTrials);
    }
    let trials: Vec<TrialRecord> = (0..n_trials)
        .map(|k| {
            let t = run_trial(data, splits, space, base, k, seed.wrapping_add(k as u64));
            info!(
                "trial {k}: val sharpe {}",
                t.val_sharpe.map_or("-".into(), |s| format!("{s:.4}"))
            );
            t
        })
        .collect();
    let outcome = SearchOutcome {
        best: trials[0].clone(),
        trials,
    };
    let best = outcome.ranked()[0].clone();
    if best.val_sharpe.is_none_or(|s| !s.is_finite()) {
        return Err(SearchError::AllFailed(n_trials));
    }
    Ok(SearchOutcome { best, ..outcome })
}

/// Trains the winning config on train ∪ validation for the number of
/// epochs that was best during the search.
pub fn retrain_best(data: &mut TrainingData, splits: &Splits, best: &TrialRecord) -> Result<TrainOutcome> {
    let config = ModelConfig {
        epochs: best.best_epoch,
        ..best.config.clone()
    };
    Ok(train(&config, data, splits.train_full(), None)?)
}

pub fn write_trials_csv(trials: &[TrialRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "trial,seed,batch_size,lstm_hidden,lstm_layers,lstm_dropout,gat_hidden,gat_dropout,gat_alpha,final_dropout,\
         learning_rate,lstm_weight_decay,gat_weight_decay,final_weight_decay,val_sharpe,best_epoch"
    )?;
    for t in trials {
        let c = &t.config;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{:e},{},{}",
            t.trial,
            t.seed,
            c.batch_size,
            c.lstm_hidden,
            c.lstm_layers,
            c.lstm_dropout,
            c.gat_hidden,
            c.gat_dropout,
            c.gat_alpha,
            c.final_dropout,
            c.learning_rate,
            c.lstm_weight_decay,
            c.gat_weight_decay,
            c.final_weight_decay,
            t.val_sharpe.map_or(String::new(), |s| format!("{s}")),
            t.best_epoch
        )?;
    }
    Ok(())
}
