use super::{FeatureError, Result};

/// A full-length daily series whose values before `first` are undefined
/// (stored as NaN).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub first: usize,
    pub values: Vec<f64>,
}

impl Series {
    pub fn get(&self, t: usize) -> Option<f64> {
        (t >= self.first && t < self.values.len()).then(|| self.values[t])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Defined values only.
    pub fn defined(&self) -> &[f64] {
        &self.values[self.first.min(self.values.len())..]
    }

    fn undefined(len: usize, first: usize) -> Self {
        Series {
            first,
            values: vec![f64::NAN; len],
        }
    }
}

fn check_prices(p: &[f64]) -> Result<()> {
    match p.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(index) => Err(FeatureError::NonPositivePrice { index, value: p[index] }),
        None => Ok(()),
    }
}

/// ln(P[t] / P[t-1]), defined from t = 1.
pub fn log_return(p: &[f64]) -> Result<Series> {
    check_prices(p)?;
    if p.len() < 2 {
        return Err(FeatureError::InsufficientHistory { needed: 2, have: p.len() });
    }
    let mut out = Series::undefined(p.len(), 1);
    for t in 1..p.len() {
        out.values[t] = (p[t] / p[t - 1]).ln();
    }
    Ok(out)
}

/// (P[t] / P[t-h] - 1) · 252 / h, defined from t = h.
pub fn annualized_return(p: &[f64], horizon: usize) -> Result<Series> {
    check_prices(p)?;
    if horizon == 0 || p.len() <= horizon {
        return Err(FeatureError::InsufficientHistory {
            needed: horizon + 1,
            have: p.len(),
        });
    }
    let mut out = Series::undefined(p.len(), horizon);
    let scale = 252.0 / horizon as f64;
    for t in horizon..p.len() {
        out.values[t] = (p[t] / p[t - horizon] - 1.0) * scale;
    }
    Ok(out)
}

/// Trailing sample standard deviation (divisor `window - 1`).
pub fn rolling_volatility(x: &Series, window: usize) -> Result<Series> {
    if window < 2 {
        return Err(FeatureError::InvalidArgument(format!("volatility window {window} < 2")));
    }
    let first = x.first + window - 1;
    if x.len() <= first {
        return Err(FeatureError::InsufficientHistory {
            needed: first + 1,
            have: x.len(),
        });
    }
    let mut out = Series::undefined(x.len(), first);
    for t in first..x.len() {
        let w = &x.values[t + 1 - window..=t];
        let mean = w.iter().sum::<f64>() / window as f64;
        let ss: f64 = w.iter().map(|v| (v - mean).powi(2)).sum();
        out.values[t] = (ss / (window - 1) as f64).sqrt();
    }
    Ok(out)
}

/// Streaming exponential moving average with α = 2 / (span + 1), seeded at
/// the first observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaState {
    pub span: usize,
    pub alpha: f64,
    pub value: Option<f64>,
}

impl EmaState {
    pub fn new(span: usize) -> Self {
        assert!(span >= 1, "EMA span must be positive");
        EmaState {
            span,
            alpha: 2.0 / (span as f64 + 1.0),
            value: None,
        }
    }

    pub fn update(&mut self, x: f64) -> f64 {
        let v = match self.value {
            None => x,
            Some(prev) => self.alpha * x + (1.0 - self.alpha) * prev,
        };
        self.value = Some(v);
        v
    }
}

pub fn ema(p: &[f64], span: usize) -> Vec<f64> {
    let mut state = EmaState::new(span);
    p.iter().map(|x| state.update(*x)).collect()
}

/// EMA₅(P) − EMA₂₁(P), defined from t = 0.
pub fn macd(p: &[f64]) -> Result<Series> {
    check_prices(p)?;
    let fast = ema(p, 5);
    let slow = ema(p, 21);
    Ok(Series {
        first: 0,
        values: fast.iter().zip(&slow).map(|(f, s)| f - s).collect(),
    })
}

/// Daily sentiment aggregates for one ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentFeatures {
    pub news_count: Vec<f64>,
    pub news_frequency: Vec<f64>,
    pub avg_sentiment: Vec<f64>,
    pub sentiment_variance: Vec<f64>,
    pub weighted_sentiment: Vec<f64>,
}

/// `scores[asset][day]` holds that day's article sentiments.
pub fn sentiment_features(scores: &[Vec<Vec<f64>>]) -> Vec<SentimentFeatures> {
    let days = scores.first().map_or(0, Vec::len);
    let totals: Vec<usize> = (0..days).map(|d| scores.iter().map(|a| a[d].len()).sum()).collect();
    scores
        .iter()
        .map(|asset| {
            let mut f = SentimentFeatures {
                news_count: Vec::with_capacity(days),
                news_frequency: Vec::with_capacity(days),
                avg_sentiment: Vec::with_capacity(days),
                sentiment_variance: Vec::with_capacity(days),
                weighted_sentiment: Vec::with_capacity(days),
            };
            for (d, s) in asset.iter().enumerate() {
                let count = s.len();
                let freq = if totals[d] == 0 { 0.0 } else { count as f64 / totals[d] as f64 };
                let (avg, var) = if count == 0 {
                    (0.0, 0.0)
                } else {
                    let m = s.iter().sum::<f64>() / count as f64;
                    let v = if count == 1 {
                        0.0
                    } else {
                        s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / count as f64
                    };
                    (m, v)
                };
                f.news_count.push(count as f64);
                f.news_frequency.push(freq);
                f.avg_sentiment.push(avg);
                f.sentiment_variance.push(var);
                f.weighted_sentiment.push(freq * avg);
            }
            f
        })
        .collect()
}
