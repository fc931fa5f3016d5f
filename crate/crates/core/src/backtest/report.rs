use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{equity_curve, metrics, portfolio_returns, BacktestError, Metrics, Result, METRIC_NAMES};

/// One strategy over one date range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    /// Decision dates; `equity[k]` is the value at the close of `dates[k]`.
    pub dates: Vec<NaiveDate>,
    #[serde(skip)]
    pub weights: Vec<Vec<f64>>,
    #[serde(skip)]
    pub returns: Vec<f64>,
    #[serde(skip)]
    pub equity: Vec<f64>,
    pub metrics: Metrics,
}

impl BacktestReport {
    /// `weights[k]` is decided on `dates[k]`; `asset_returns[k]` is the
    /// simple return realized on `dates[k]`.
    pub fn new(strategy: impl Into<String>, dates: Vec<NaiveDate>, weights: Vec<Vec<f64>>, asset_returns: &[Vec<f64>]) -> Result<Self> {
        if dates.len() != weights.len() {
            return Err(BacktestError::Misaligned(format!("{} dates vs {} weight rows", dates.len(), weights.len())));
        }
        let returns = portfolio_returns(&weights, asset_returns)?;
        let metrics = metrics(&returns)?;
        Ok(BacktestReport {
            strategy: strategy.into(),
            equity: equity_curve(&returns),
            dates,
            weights,
            returns,
            metrics,
        })
    }

    pub fn start(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn end(&self) -> NaiveDate {
        *self.dates.last().expect("reports are non-empty")
    }

    /// Metrics, date range and the given config echo as pretty JSON.
    pub fn summary_json(&self, config: &serde_json::Value) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            strategy: &'a str,
            start: NaiveDate,
            end: NaiveDate,
            trading_days: usize,
            metrics: &'a Metrics,
            config: &'a serde_json::Value,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            strategy: &self.strategy,
            start: self.start(),
            end: self.end(),
            trading_days: self.returns.len(),
            metrics: &self.metrics,
            config,
        })?)
    }
}

/// `strategy_equity − benchmark_equity` on each shared date.
pub fn excess_curve(strategy: &BacktestReport, benchmark: &BacktestReport) -> Result<Vec<f64>> {
    if strategy.dates != benchmark.dates {
        return Err(BacktestError::Misaligned(format!(
            "{} and {} cover different dates",
            strategy.strategy, benchmark.strategy
        )));
    }
    Ok(strategy.equity.iter().zip(&benchmark.equity).map(|(a, b)| a - b).collect())
}

/// Relative change of one metric against a benchmark, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDiff {
    pub metric: String,
    pub model: f64,
    pub benchmark: f64,
    /// `None` when the benchmark value is zero.
    pub percent: Option<f64>,
}

/// `(model − benchmark) / |benchmark| · 100` per metric.
pub fn percentage_difference(model: &Metrics, benchmark: &Metrics) -> Vec<MetricDiff> {
    METRIC_NAMES
        .iter()
        .zip(model.values().into_iter().zip(benchmark.values()))
        .map(|(name, (m, b))| MetricDiff {
            metric: name.to_string(),
            model: m,
            benchmark: b,
            percent: (b != 0.0).then(|| (m - b) / b.abs() * 100.0),
        })
        .collect()
}

pub fn write_equity_csv(report: &BacktestReport, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "date,equity,daily_return")?;
    for (k, (d, e)) in report.dates.iter().zip(&report.equity).enumerate() {
        let r = if k == 0 { 0.0 } else { report.returns[k - 1] };
        writeln!(out, "{d},{e:.12e},{r:.12e}")?;
    }
    Ok(())
}

pub fn write_excess_csv(dates: &[NaiveDate], excess: &[f64], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "date,excess")?;
    for (d, e) in dates.iter().zip(excess) {
        writeln!(out, "{d},{e:.12e}")?;
    }
    Ok(())
}

/// Metric rows by strategy columns.
pub fn write_comparison_csv(reports: &[&BacktestReport], mut out: impl Write) -> std::io::Result<()> {
    let names: Vec<&str> = reports.iter().map(|r| r.strategy.as_str()).collect();
    writeln!(out, "metric,{}", names.join(","))?;
    for (i, metric) in METRIC_NAMES.iter().enumerate() {
        write!(out, "{metric}")?;
        for r in reports {
            write!(out, ",{:.12e}", r.metrics.values()[i])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
