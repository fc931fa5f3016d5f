//! Technical and sentiment features, per-ticker standardization, pooled PCA
//! and lookback windows.
//!
//! Raw features live in a [`FeatureFrame`] laid out day-major
//! (`[day][asset][feature]`), with NaN marking the warm-up prefix where a
//! feature is not yet defined. A fitted [`FeaturePipeline`] turns a panel
//! into [`ModelInputs`], from which windows are sliced without copying the
//! whole history.

mod indicators;
mod transform;

pub use indicators::{
    annualized_return, ema, log_return, macd, rolling_volatility, sentiment_features, EmaState, SentimentFeatures,
    Series,
};
pub use transform::{PcaTransform, Standardizer};

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::data::MergedPanel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("unknown model version {0:?} (expected v1..v5)")]
    UnknownVersion(String),
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("insufficient history: need {needed} observations, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("empty fitting range")]
    EmptyRange,
    #[error("pooled features have rank {rank} < {k}; degenerate features: {degenerate:?}")]
    RankDeficient {
        k: usize,
        rank: usize,
        degenerate: Vec<String>,
    },
    #[error("day {t} precedes the first valid window day {warmup}")]
    Warmup { t: usize, warmup: usize },
    #[error("day {t} is outside the panel ({days} days)")]
    OutOfRange { t: usize, days: usize },
    #[error("non-finite feature value at day {t}, asset {asset}")]
    NonFinite { t: usize, asset: usize },
    #[error("pipeline expects {expected} assets, panel has {found}")]
    AssetMismatch { expected: usize, found: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

pub const LOOKBACK: usize = 30;
pub const PCA_COMPONENTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Version {
    V1,
    V2,
    V3,
    V4,
    V5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Static,
    Dynamic,
}

const V1: [&str; 3] = ["close", "volume", "log_return"];
const V2_EXTRA: [&str; 5] = ["ann_ret_1w", "ann_ret_2w", "ann_ret_1m", "vol_5d", "macd"];
const V3_EXTRA: [&str; 2] = ["sentiment_variance", "weighted_sentiment"];
const V5_EXTRA: [&str; 2] = ["news_count", "avg_sentiment"];

impl Version {
    pub const ALL: [Version; 5] = [Version::V1, Version::V2, Version::V3, Version::V4, Version::V5];

    pub fn graph_kind(self) -> GraphKind {
        match self {
            Version::V1 | Version::V2 | Version::V3 => GraphKind::Static,
            Version::V4 | Version::V5 => GraphKind::Dynamic,
        }
    }

    pub fn uses_pca(self) -> bool {
        self == Version::V5
    }

    /// Raw feature names, before any PCA.
    pub fn features(self) -> Vec<&'static str> {
        let mut out = V1.to_vec();
        if self >= Version::V2 {
            out.extend(V2_EXTRA);
        }
        if self >= Version::V3 {
            out.extend(V3_EXTRA);
        }
        if self == Version::V5 {
            out.extend(V5_EXTRA);
        }
        out
    }

    /// Dimension of the model input after PCA (if any).
    pub fn input_dim(self) -> usize {
        if self.uses_pca() {
            PCA_COMPONENTS
        } else {
            self.features().len()
        }
    }

    pub fn max_lag(self) -> usize {
        self.features().iter().map(|f| feature_lag(f)).max().unwrap_or(0)
    }

    /// First day index whose window is fully defined.
    pub fn warmup(self, lookback: usize) -> usize {
        self.max_lag() + lookback
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = Version::ALL.iter().position(|v| v == self).unwrap() + 1;
        write!(f, "v{n}")
    }
}

impl FromStr for Version {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v1" => Ok(Version::V1),
            "v2" => Ok(Version::V2),
            "v3" => Ok(Version::V3),
            "v4" => Ok(Version::V4),
            "v5" => Ok(Version::V5),
            _ => Err(FeatureError::UnknownVersion(s.to_string())),
        }
    }
}

/// Ordered feature names for a version string.
pub fn feature_set(version: &str) -> Result<Vec<&'static str>> {
    Ok(version.parse::<Version>()?.features())
}

/// Days of history a feature needs before its first defined value.
pub fn feature_lag(name: &str) -> usize {
    match name {
        "log_return" => 1,
        "ann_ret_1w" | "vol_5d" => 5,
        "ann_ret_2w" => 10,
        "ann_ret_1m" => 21,
        _ => 0,
    }
}

/// Day-major feature cube with NaN before each feature's lag.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub names: Vec<String>,
    pub lags: Vec<usize>,
    pub n_assets: usize,
    pub n_days: usize,
    pub data: Vec<f64>,
}

impl FeatureFrame {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, day: usize, asset: usize, feature: usize) -> f64 {
        self.data[(day * self.n_assets + asset) * self.dim() + feature]
    }

    /// Computes `names` for every asset of `panel`.
    pub fn compute(panel: &MergedPanel, names: &[&str]) -> Result<Self> {
        let (n, days, f) = (panel.n_assets(), panel.n_days(), names.len());
        let mut data = vec![f64::NAN; days * n * f];
        let needs_sentiment = names.iter().any(|s| V3_EXTRA.contains(s) || V5_EXTRA.contains(s));
        let sentiment = needs_sentiment.then(|| sentiment_features(&panel.sentiments));
        for a in 0..n {
            let close = panel.close(a);
            let lr = || log_return(&close);
            for (k, name) in names.iter().enumerate() {
                let series = match *name {
                    "close" => Series { first: 0, values: close.clone() },
                    "volume" => Series { first: 0, values: panel.volume(a) },
                    "log_return" => lr()?,
                    "ann_ret_1w" => annualized_return(&close, 5)?,
                    "ann_ret_2w" => annualized_return(&close, 10)?,
                    "ann_ret_1m" => annualized_return(&close, 21)?,
                    "vol_5d" => rolling_volatility(&lr()?, 5)?,
                    "macd" => macd(&close)?,
                    other => {
                        let s = &sentiment.as_ref().expect("sentiment computed")[a];
                        let values = match other {
                            "sentiment_variance" => s.sentiment_variance.clone(),
                            "weighted_sentiment" => s.weighted_sentiment.clone(),
                            "news_count" => s.news_count.clone(),
                            "avg_sentiment" => s.avg_sentiment.clone(),
                            _ => return Err(FeatureError::InvalidArgument(format!("unknown feature {other:?}"))),
                        };
                        Series { first: 0, values }
                    }
                };
                for t in series.first..days {
                    data[(t * n + a) * f + k] = series.values[t];
                }
            }
        }
        Ok(FeatureFrame {
            names: names.iter().map(|s| s.to_string()).collect(),
            lags: names.iter().map(|s| feature_lag(s)).collect(),
            n_assets: n,
            n_days: days,
            data,
        })
    }

    /// `date,ticker,<features>` with undefined values left empty.
    pub fn write_csv(&self, panel: &MergedPanel, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "date,ticker,{}", self.names.join(","))?;
        for t in 0..self.n_days {
            for a in 0..self.n_assets {
                write!(w, "{},{}", panel.calendar[t], panel.tickers[a])?;
                for k in 0..self.dim() {
                    let v = self.get(t, a, k);
                    if v.is_nan() {
                        write!(w, ",")?;
                    } else {
                        write!(w, ",{v:.12e}")?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Standardized (and for v5 PCA-projected) inputs for every panel day.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub n_assets: usize,
    pub n_days: usize,
    pub dim: usize,
    /// First day on which every feature is defined.
    pub first_defined: usize,
    pub data: Vec<f64>,
}

/// Lookback tensor `(assets × lookback × features)` as of day `as_of`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub values: Tensor,
    pub names: Vec<String>,
    pub as_of: usize,
}

impl ModelInputs {
    /// `n_assets × dim` block for one day.
    pub fn day(&self, t: usize) -> &[f64] {
        let w = self.n_assets * self.dim;
        &self.data[t * w..(t + 1) * w]
    }

    pub fn first_window_day(&self, lookback: usize) -> usize {
        self.first_defined + lookback
    }

    pub fn check_window(&self, t: usize, lookback: usize) -> Result<()> {
        if t >= self.n_days {
            return Err(FeatureError::OutOfRange { t, days: self.n_days });
        }
        let warmup = self.first_window_day(lookback);
        if t < warmup {
            return Err(FeatureError::Warmup { t, warmup });
        }
        Ok(())
    }
}

/// Window of the `lookback` days ending at `t` (inclusive).
pub fn build_window(inputs: &ModelInputs, names: &[String], t: usize, lookback: usize) -> Result<FeatureWindow> {
    inputs.check_window(t, lookback)?;
    let (n, f) = (inputs.n_assets, inputs.dim);
    let mut values = vec![0.0; n * lookback * f];
    for s in 0..lookback {
        let day = inputs.day(t + 1 - lookback + s);
        for a in 0..n {
            let src = &day[a * f..(a + 1) * f];
            if src.iter().any(|v| !v.is_finite()) {
                return Err(FeatureError::NonFinite { t: t + 1 - lookback + s, asset: a });
            }
            values[(a * lookback + s) * f..(a * lookback + s + 1) * f].copy_from_slice(src);
        }
    }
    Ok(FeatureWindow {
        values: Tensor::new(vec![n, lookback, f], values).expect("window shape"),
        names: names.to_vec(),
        as_of: t,
    })
}

/// Fitted preprocessing: standardizer plus optional PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub version: Version,
    pub raw_names: Vec<String>,
    pub standardizer: Standardizer,
    pub pca: Option<PcaTransform>,
}

impl FeaturePipeline {
    /// Fits on days `range` only.
    pub fn fit(panel: &MergedPanel, version: Version, range: Range<usize>) -> Result<Self> {
        let frame = FeatureFrame::compute(panel, &version.features())?;
        let standardizer = Standardizer::fit(&frame, range.clone())?;
        let pca = if version.uses_pca() {
            let z = standardizer.apply(&frame);
            let start = range.start.max(version.max_lag());
            if start >= range.end {
                return Err(FeatureError::EmptyRange);
            }
            let w = frame.n_assets * frame.dim();
            let rows = &z.data[start * w..range.end * w];
            Some(PcaTransform::fit(rows, &frame.names, PCA_COMPONENTS)?)
        } else {
            None
        };
        Ok(FeaturePipeline {
            version,
            raw_names: frame.names,
            standardizer,
            pca,
        })
    }

    pub fn output_names(&self) -> Vec<String> {
        match &self.pca {
            Some(p) => (1..=p.k).map(|i| format!("pc{i}")).collect(),
            None => self.raw_names.clone(),
        }
    }

    pub fn transform(&self, panel: &MergedPanel) -> Result<ModelInputs> {
        if panel.n_assets() != self.standardizer.mean.len() {
            return Err(FeatureError::AssetMismatch {
                expected: self.standardizer.mean.len(),
                found: panel.n_assets(),
            });
        }
        let names: Vec<&str> = self.raw_names.iter().map(String::as_str).collect();
        let frame = FeatureFrame::compute(panel, &names)?;
        let z = self.standardizer.apply(&frame);
        let first_defined = frame.lags.iter().copied().max().unwrap_or(0);
        let data = match &self.pca {
            None => z.data,
            Some(p) => {
                let mut out = vec![f64::NAN; frame.n_days * frame.n_assets * p.k];
                for r in first_defined * frame.n_assets..frame.n_days * frame.n_assets {
                    p.project(&z.data[r * p.dim..(r + 1) * p.dim], &mut out[r * p.k..(r + 1) * p.k]);
                }
                out
            }
        };
        Ok(ModelInputs {
            n_assets: frame.n_assets,
            n_days: frame.n_days,
            dim: self.output_names().len(),
            first_defined,
            data,
        })
    }
}

#[cfg(test)]
mod tests;
