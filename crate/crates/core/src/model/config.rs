use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::features::{Version, LOOKBACK};

/// Network, optimizer and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub version: Version,
    pub batch_size: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub lstm_dropout: f64,
    pub lstm_bidirectional: bool,
    pub gat_hidden: usize,
    pub gat_layers: usize,
    pub gat_heads: usize,
    pub gat_dropout: f64,
    pub gat_alpha: f64,
    pub final_dropout: f64,
    pub learning_rate: f64,
    pub lstm_weight_decay: f64,
    pub gat_weight_decay: f64,
    pub final_weight_decay: f64,
    pub lookback: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Trailing window of daily simple returns for the loss covariance.
    pub cov_window: usize,
    /// Floor on wᵀΣw inside the loss square root.
    pub variance_floor: f64,
    /// Minimum |Σ raw scores| before a date counts as degenerate.
    pub normalization_eps: f64,
    /// Add static-graph correlation weights to attention logits.
    pub edge_bias: bool,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Initial head bias; a positive value starts near equal weight.
    pub head_bias_init: f64,
    pub forget_bias_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::preset(Version::V1)
    }
}

impl ModelConfig {
    /// Published per-version settings, shipped verbatim.
    pub fn preset(version: Version) -> Self {
        // (batch, lstm_hidden, lstm_layers, lstm_dropout, gat_hidden, gat_dropout, gat_alpha,
        //  lstm_wd, gat_wd, lr, final_dropout, final_wd)
        let p = match version {
            Version::V1 => (64, 96, 2, 0.10, 96, 0.10, 0.10, 5.71e-4, 1.68e-5, 7.02e-4, 0.20, 1.74e-4),
            Version::V2 => (32, 96, 3, 0.25, 64, 0.25, 0.30, 9.44e-5, 1.23e-4, 3.48e-3, 0.35, 5.13e-5),
            Version::V3 => (32, 32, 2, 0.0, 64, 0.30, 0.25, 1.08e-6, 2.78e-3, 1.27e-3, 0.25, 2.00e-3),
            Version::V4 => (64, 80, 1, 0.27, 80, 0.20, 0.15, 3.33e-3, 2.48e-4, 3.98e-3, 0.29, 2.69e-4),
            Version::V5 => (32, 32, 1, 0.21, 32, 0.25, 0.35, 1.99e-4, 5.54e-4, 1.41e-3, 0.34, 5.00e-4),
        };
        ModelConfig {
            version,
            batch_size: p.0,
            lstm_hidden: p.1,
            lstm_layers: p.2,
            lstm_dropout: p.3,
            lstm_bidirectional: false,
            gat_hidden: p.4,
            gat_layers: 2,
            gat_heads: 1,
            gat_dropout: p.5,
            gat_alpha: p.6,
            final_dropout: p.10,
            learning_rate: p.9,
            lstm_weight_decay: p.7,
            gat_weight_decay: p.8,
            final_weight_decay: p.11,
            lookback: LOOKBACK,
            epochs: 40,
            seed: 42,
            cov_window: LOOKBACK,
            variance_floor: 1e-10,
            normalization_eps: 1e-6,
            edge_bias: false,
            grad_clip: None,
            head_bias_init: 0.5,
            forget_bias_init: 1.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.version.input_dim()
    }

    /// Structural constraints only; search-space domains are checked by
    /// the tuner, since published presets sit slightly outside them.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.lstm_bidirectional {
            return bad("bidirectional LSTM is not supported".into());
        }
        if self.gat_layers != 2 {
            return bad(format!("gat_layers must be 2, got {}", self.gat_layers));
        }
        if self.gat_heads != 1 {
            return bad(format!("gat_heads must be 1, got {}", self.gat_heads));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("gat_hidden", self.gat_hidden),
            ("lookback", self.lookback),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.cov_window < 2 {
            return bad("cov_window must be at least 2".into());
        }
        for (name, r) in [
            ("lstm_dropout", self.lstm_dropout),
            ("gat_dropout", self.gat_dropout),
            ("final_dropout", self.final_dropout),
        ] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} = {r} must lie in [0, 1)"));
            }
        }
        if !(self.gat_alpha.is_finite() && self.gat_alpha >= 0.0) {
            return bad(format!("gat_alpha = {} must be non-negative", self.gat_alpha));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        for (name, d) in [
            ("lstm_weight_decay", self.lstm_weight_decay),
            ("gat_weight_decay", self.gat_weight_decay),
            ("final_weight_decay", self.final_weight_decay),
        ] {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("{name} = {d} must be non-negative"));
            }
        }
        if !(self.variance_floor.is_finite() && self.variance_floor > 0.0) {
            return bad("variance_floor must be positive".into());
        }
        if !(self.normalization_eps.is_finite() && self.normalization_eps > 0.0) {
            return bad("normalization_eps must be positive".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return bad("grad_clip must be positive".into());
            }
        }
        Ok(())
    }
}
