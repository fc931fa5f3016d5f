//! Asset graphs: a static correlation graph fixed over training data and a
//! binary dynamic graph rebuilt every few trading days from sector identity
//! and short-window return/sentiment correlations.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MergedPanel;
pub use crate::features::GraphKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("static graph needs at least {needed} return observations, got {have}")]
    TooFewObservations { needed: usize, have: usize },
    #[error("ticker {0} has zero return variance over the graph window")]
    ZeroVariance(String),
    #[error("adjacency invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

pub const STATIC_MIN_OBS: usize = 30;
pub const DYNAMIC_WINDOW: usize = 5;
pub const REFRESH_PERIOD: usize = 5;
pub const EDGE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetGraph {
    pub kind: GraphKind,
    pub n: usize,
    /// Row-major `n × n`.
    pub adjacency: Vec<f64>,
    /// Build day for dynamic graphs.
    pub as_of: Option<usize>,
}

impl AssetGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    /// Static graphs are complete (correlation defines every pair); dynamic
    /// graphs connect where the binary adjacency is set.
    pub fn connected(&self, i: usize, j: usize) -> bool {
        match self.kind {
            GraphKind::Static => true,
            GraphKind::Dynamic => self.weight(i, j) > 0.5,
        }
    }

    /// Row-major neighbor mask for attention.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.n * self.n).map(|k| self.connected(k / self.n, k % self.n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.adjacency.len() != self.n * self.n {
            return Err(GraphError::Invariant("adjacency size".into()));
        }
        for i in 0..self.n {
            if self.weight(i, i) != 1.0 {
                return Err(GraphError::Invariant(format!("diagonal entry {i} is {}", self.weight(i, i))));
            }
            for j in 0..i {
                if self.weight(i, j) != self.weight(j, i) {
                    return Err(GraphError::Invariant(format!("asymmetric at ({i}, {j})")));
                }
                let w = self.weight(i, j);
                let ok = match self.kind {
                    GraphKind::Static => (-1.0..=1.0).contains(&w),
                    GraphKind::Dynamic => w == 0.0 || w == 1.0,
                };
                if !ok {
                    return Err(GraphError::Invariant(format!("weight {w} at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    /// Adjacency as CSV with a ticker header row and column.
    pub fn write_csv(&self, tickers: &[String], mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "ticker,{}", tickers.join(","))?;
        for i in 0..self.n {
            write!(w, "{}", tickers[i])?;
            for j in 0..self.n {
                write!(w, ",{}", self.weight(i, j))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // relative guard so constant-but-rounded windows count as zero variance
    let tiny = |s: f64, m: f64| s <= 1e-24 * (1.0 + m * m) * n;
    if tiny(saa, ma) || tiny(sbb, mb) {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation over the `window` observations ending at `end` (inclusive);
/// 0 when either window is constant or too short.
pub fn rolling_correlation(a: &[f64], b: &[f64], window: usize, end: usize) -> f64 {
    if end + 1 < window || end >= a.len() || end >= b.len() {
        return 0.0;
    }
    let r = end + 1 - window..end + 1;
    pearson(&a[r.clone()], &b[r]).unwrap_or(0.0)
}

/// Daily log returns for every asset; index 0 is 0 and never used.
pub fn log_return_panel(panel: &MergedPanel) -> Vec<Vec<f64>> {
    panel
        .bars
        .iter()
        .map(|b| {
            let mut out = vec![0.0; b.len()];
            for t in 1..b.len() {
                out[t] = (b[t].close / b[t - 1].close).ln();
            }
            out
        })
        .collect()
}

pub fn sentiment_panel(panel: &MergedPanel) -> Vec<Vec<f64>> {
    (0..panel.n_assets())
        .map(|a| (0..panel.n_days()).map(|t| panel.avg_sentiment(a, t)).collect())
        .collect()
}

/// Full-sample correlation of daily log returns on `days` (each day's
/// return is measured from the previous day, so day 0 is skipped).
pub fn static_graph(returns: &[Vec<f64>], tickers: &[String], days: Range<usize>) -> Result<AssetGraph> {
    let days = days.start.max(1)..days.end;
    let have = days.len();
    if have < STATIC_MIN_OBS {
        return Err(GraphError::TooFewObservations {
            needed: STATIC_MIN_OBS,
            have,
        });
    }
    let n = returns.len();
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        adjacency[i * n + i] = 1.0;
        for j in 0..i {
            let c = pearson(&returns[i][days.clone()], &returns[j][days.clone()])
                .ok_or_else(|| {
                    let bad = if pearson(&returns[i][days.clone()], &returns[i][days.clone()]).is_none() { i } else { j };
                    GraphError::ZeroVariance(tickers[bad].clone())
                })?;
            adjacency[i * n + j] = c;
            adjacency[j * n + i] = c;
        }
    }
    let g = AssetGraph {
        kind: GraphKind::Static,
        n,
        adjacency,
        as_of: None,
    };
    g.validate()?;
    Ok(g)
}

/// Binary graph as of day `t`: edge iff same sector, or |5-day return
/// correlation| > threshold, or |5-day sentiment correlation| > threshold.
pub fn dynamic_graph(t: usize, sectors: &[String], returns: &[Vec<f64>], sentiment: &[Vec<f64>], threshold: f64) -> AssetGraph {
    let n = sectors.len();
    // returns are defined from day 1
    let window_ok = t >= DYNAMIC_WINDOW;
    if !window_ok {
        warn!("dynamic graph at day {t}: fewer than {DYNAMIC_WINDOW} returns, using sector edges only");
    }
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        adjacency[i * n + i] = 1.0;
        for j in 0..i {
            let mut edge = sectors[i] == sectors[j];
            if !edge && window_ok {
                let rc = rolling_correlation(&returns[i], &returns[j], DYNAMIC_WINDOW, t);
                let sc = rolling_correlation(&sentiment[i], &sentiment[j], DYNAMIC_WINDOW, t);
                edge = rc.abs() > threshold || sc.abs() > threshold;
            }
            if edge {
                adjacency[i * n + j] = 1.0;
                adjacency[j * n + i] = 1.0;
            }
        }
    }
    let g = AssetGraph {
        kind: GraphKind::Dynamic,
        n,
        adjacency,
        as_of: Some(t),
    };
    debug_assert!(g.validate().is_ok());
    g
}

/// Build day for each day of `range`: days `start, start + period, ...`
/// build a graph that the following `period - 1` days reuse.
pub fn refresh_schedule(range: Range<usize>, period: usize) -> BTreeMap<usize, usize> {
    let period = period.max(1);
    range.clone().map(|t| (t, range.start + (t - range.start) / period * period)).collect()
}

/// Dynamic graphs for a panel, computed on demand and cached by build day.
#[derive(Debug, Clone)]
pub struct DynamicGraphs {
    sectors: Vec<String>,
    returns: Vec<Vec<f64>>,
    sentiment: Vec<Vec<f64>>,
    pub threshold: f64,
    pub period: usize,
    cache: BTreeMap<usize, AssetGraph>,
}

impl DynamicGraphs {
    pub fn new(panel: &MergedPanel) -> Self {
        DynamicGraphs {
            sectors: panel.sectors.clone(),
            returns: log_return_panel(panel),
            sentiment: sentiment_panel(panel),
            threshold: EDGE_THRESHOLD,
            period: REFRESH_PERIOD,
            cache: BTreeMap::new(),
        }
    }

    /// Graph in force on day `t` for a schedule anchored at `anchor`.
    pub fn for_day(&mut self, anchor: usize, t: usize) -> &AssetGraph {
        debug_assert!(t >= anchor);
        let build = anchor + (t - anchor) / self.period * self.period;
        let (sectors, returns, sentiment, thr) = (&self.sectors, &self.returns, &self.sentiment, self.threshold);
        self.cache
            .entry(build)
            .or_insert_with(|| dynamic_graph(build, sectors, returns, sentiment, thr))
    }
}
