//! Price, news, sector and benchmark ingestion.
//!
//! Everything here reads plain CSV files. Dates are ISO-8601 strings on disk
//! and integer day indices into the merged panel's calendar internally.

mod dataset;
mod load;
mod panel;
mod series;
mod split;
pub mod synthetic;

pub use dataset::{load_dataset, Dataset, DatasetPaths};
pub use load::{load_news_csv, load_price_csv, load_sector_csv, PriceTable};
pub use panel::{align_news_to_trading_days, build_panel, common_calendar, AlignedNews, Article, MergedPanel, PanelBuild};
pub use series::{load_market_series, load_riskfree_series, DateSeries};
pub use split::{split_panel, SplitSpec, Splits};
pub use synthetic::{generate_synthetic, RegimeSpec, SyntheticDataset};

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: unexpected header {found:?}, expected {expected:?}")]
    Header {
        path: PathBuf,
        found: Vec<String>,
        expected: Vec<&'static str>,
    },
    #[error("{path}: no rows")]
    NoRows { path: PathBuf },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("duplicate row for {ticker} on {date} with conflicting values")]
    DuplicateConflict { ticker: String, date: NaiveDate },
    #[error("ticker {0} has no sector assignment")]
    MissingSector(String),
    #[error("panel needs at least 2 tickers, got {0}")]
    TooFewTickers(usize),
    #[error("panel has no common trading days")]
    EmptyCalendar,
    #[error("{days} days cannot be split: {reason}")]
    SplitTooShort { days: usize, reason: String },
    #[error("{what} series is empty")]
    EmptySeries { what: String },
    #[error("{what} series does not cover {} panel dates (first: {})", dates.len(), dates[0])]
    Uncovered { what: String, dates: Vec<NaiveDate> },
    #[error("invalid synthetic regime: {0}")]
    InvalidRegime(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// One daily OHLCV observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl PriceBar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("non-positive price in {prices:?}"));
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("negative volume {}", self.volume));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        if self.low > self.high {
            return Err(format!("low {} above high {}", self.low, self.high));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewsRecord {
    pub timestamp: NaiveDateTime,
    pub ticker: String,
    pub sentiment: f64,
    pub relevance: f64,
}

/// Ticker to GICS sector label; constant over time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SectorMap(pub BTreeMap<String, String>);

impl SectorMap {
    pub fn get(&self, ticker: &str) -> Option<&str> {
        self.0.get(ticker).map(String::as_str)
    }

    pub fn insert(&mut self, ticker: impl Into<String>, sector: impl Into<String>) {
        self.0.insert(ticker.into(), sector.into());
    }
}

pub(crate) fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {s:?}: {e}"))
}
