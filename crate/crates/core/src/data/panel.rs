use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use log::warn;

use super::{DataError, NewsRecord, PriceBar, PriceTable, Result, SectorMap};

/// One article after alignment to a trading day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Article {
    pub sentiment: f64,
    pub relevance: f64,
}

/// News bucketed by (ticker, calendar index).
#[derive(Debug, Clone, Default)]
pub struct AlignedNews {
    pub days: usize,
    pub cells: BTreeMap<String, BTreeMap<usize, Vec<Article>>>,
    /// Records dated after the final calendar day.
    pub dropped: usize,
}

impl AlignedNews {
    pub fn articles(&self, ticker: &str, day: usize) -> &[Article] {
        self.cells
            .get(ticker)
            .and_then(|m| m.get(&day))
            .map_or(&[], Vec::as_slice)
    }
}

/// Assigns each record to the first calendar day on or after its date.
pub fn align_news_to_trading_days(records: &[NewsRecord], calendar: &[NaiveDate]) -> AlignedNews {
    let mut out = AlignedNews {
        days: calendar.len(),
        ..Default::default()
    };
    for rec in records {
        let date = rec.timestamp.date();
        let day = calendar.partition_point(|d| *d < date);
        if day >= calendar.len() {
            out.dropped += 1;
            continue;
        }
        out.cells.entry(rec.ticker.clone()).or_default().entry(day).or_default().push(Article {
            sentiment: rec.sentiment,
            relevance: rec.relevance,
        });
    }
    if out.dropped > 0 {
        warn!("{} news records fall after the last trading day and were dropped", out.dropped);
    }
    out
}

/// Intersection of all tickers' trading days, ascending.
pub fn common_calendar(prices: &PriceTable) -> Result<Vec<NaiveDate>> {
    let mut iter = prices.values();
    let first = iter.next().ok_or(DataError::TooFewTickers(0))?;
    let mut common: BTreeSet<NaiveDate> = first.iter().map(|b| b.date).collect();
    for bars in iter {
        let dates: BTreeSet<NaiveDate> = bars.iter().map(|b| b.date).collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(DataError::EmptyCalendar);
    }
    Ok(common.into_iter().collect())
}

/// Dense ticker × day grid of prices and daily news aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedPanel {
    pub calendar: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub sectors: Vec<String>,
    /// `bars[ticker][day]`
    pub bars: Vec<Vec<PriceBar>>,
    /// Per-article sentiment scores, `sentiments[ticker][day]`.
    pub sentiments: Vec<Vec<Vec<f64>>>,
}

impl MergedPanel {
    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn close(&self, asset: usize) -> Vec<f64> {
        self.bars[asset].iter().map(|b| b.close).collect()
    }

    pub fn volume(&self, asset: usize) -> Vec<f64> {
        self.bars[asset].iter().map(|b| b.volume).collect()
    }

    pub fn news_count(&self, asset: usize, day: usize) -> usize {
        self.sentiments[asset][day].len()
    }

    /// Mean article sentiment; 0 on newsless days.
    pub fn avg_sentiment(&self, asset: usize, day: usize) -> f64 {
        let s = &self.sentiments[asset][day];
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    }

    /// Simple return from `day - 1` to `day` for every asset.
    pub fn simple_returns(&self, day: usize) -> Vec<f64> {
        self.bars
            .iter()
            .map(|b| b[day].close / b[day - 1].close - 1.0)
            .collect()
    }

    /// First `days` calendar days only.
    pub fn truncated(&self, days: usize) -> MergedPanel {
        let days = days.min(self.n_days());
        MergedPanel {
            calendar: self.calendar[..days].to_vec(),
            tickers: self.tickers.clone(),
            sectors: self.sectors.clone(),
            bars: self.bars.iter().map(|b| b[..days].to_vec()).collect(),
            sentiments: self.sentiments.iter().map(|s| s[..days].to_vec()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tickers.len() < 2 {
            return Err(DataError::TooFewTickers(self.tickers.len()));
        }
        if self.calendar.is_empty() {
            return Err(DataError::EmptyCalendar);
        }
        debug_assert!(self.calendar.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(self.bars.iter().all(|b| b.len() == self.calendar.len()));
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PanelBuild {
    pub panel: MergedPanel,
    /// Ticker-days discarded because not every ticker traded that day.
    pub dropped_days: usize,
    /// Articles whose ticker is not in the price table.
    pub unknown_news: usize,
}

pub fn build_panel(prices: &PriceTable, news: &AlignedNews, sectors: &SectorMap) -> Result<PanelBuild> {
    if prices.len() < 2 {
        return Err(DataError::TooFewTickers(prices.len()));
    }
    let calendar = common_calendar(prices)?;
    if news.days != calendar.len() && !news.cells.is_empty() {
        return Err(DataError::Malformed {
            path: "<news>".into(),
            line: 0,
            message: format!("news aligned to {} days but panel has {}", news.days, calendar.len()),
        });
    }
    let mut tickers = Vec::new();
    let mut sector_labels = Vec::new();
    let mut bars = Vec::new();
    let mut sentiments = Vec::new();
    let mut dropped_days = 0;
    for (ticker, series) in prices {
        let sector = sectors.get(ticker).ok_or_else(|| DataError::MissingSector(ticker.clone()))?;
        let mut grid = Vec::with_capacity(calendar.len());
        let mut k = 0;
        for bar in series {
            if k < calendar.len() && bar.date == calendar[k] {
                grid.push(*bar);
                k += 1;
            } else {
                dropped_days += 1;
            }
        }
        debug_assert_eq!(grid.len(), calendar.len());
        let scores = (0..calendar.len())
            .map(|d| news.articles(ticker, d).iter().map(|a| a.sentiment).collect())
            .collect();
        tickers.push(ticker.clone());
        sector_labels.push(sector.to_string());
        bars.push(grid);
        sentiments.push(scores);
    }
    if dropped_days > 0 {
        warn!("calendars differ across tickers; using the intersection ({dropped_days} ticker-days dropped)");
    }
    let unknown_news = news
        .cells
        .iter()
        .filter(|(t, _)| !prices.contains_key(*t))
        .map(|(_, m)| m.values().map(Vec::len).sum::<usize>())
        .sum();
    if unknown_news > 0 {
        warn!("{unknown_news} news records reference tickers without prices");
    }
    let panel = MergedPanel {
        calendar,
        tickers,
        sectors: sector_labels,
        bars,
        sentiments,
    };
    panel.validate()?;
    Ok(PanelBuild {
        panel,
        dropped_days,
        unknown_news,
    })
}
