use std::path::Path;

use chrono::NaiveDate;

use super::load::read_rows_from;
use super::{parse_date, DataError, Result};

const SERIES_HEADER: [&str; 2] = ["date", "value"];

/// A sorted `date,value` series (market index level or annualized rate).
#[derive(Debug, Clone, PartialEq)]
pub struct DateSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

impl DateSeries {
    pub fn new(mut points: Vec<(NaiveDate, f64)>) -> Self {
        points.sort_by_key(|p| p.0);
        points.dedup_by_key(|p| p.0);
        let (dates, values) = points.into_iter().unzip();
        DateSeries { dates, values }
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Values on `calendar`, forward-filling interior gaps. Calendar days
    /// before the first or after the last observation are uncovered.
    pub fn align(&self, calendar: &[NaiveDate], what: &str) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(DataError::EmptySeries { what: what.into() });
        }
        let first = self.dates[0];
        let last = *self.dates.last().unwrap();
        let uncovered: Vec<NaiveDate> = calendar.iter().copied().filter(|d| *d < first || *d > last).collect();
        if !uncovered.is_empty() {
            return Err(DataError::Uncovered {
                what: what.into(),
                dates: uncovered,
            });
        }
        Ok(calendar
            .iter()
            .map(|d| {
                let k = self.dates.partition_point(|x| x <= d);
                self.values[k - 1]
            })
            .collect())
    }
}

fn load_series(path: &Path, what: &str, positive: bool) -> Result<DateSeries> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_series(file, path, what, positive)
}

pub(crate) fn parse_series(input: impl std::io::Read, path: &Path, what: &str, positive: bool) -> Result<DateSeries> {
    let mut points = Vec::new();
    let res = read_rows_from(input, path, &SERIES_HEADER, |_, rec| {
        let date = parse_date(&rec[0])?;
        let value: f64 = rec[1].parse().map_err(|_| format!("value: not a number: {:?}", &rec[1]))?;
        if !value.is_finite() || (positive && value <= 0.0) {
            return Err(format!("invalid {what} value {value}"));
        }
        points.push((date, value));
        Ok(())
    });
    match res {
        Ok(_) | Err(DataError::NoRows { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(DateSeries::new(points))
}

/// Market index levels; must be positive.
pub fn load_market_series(path: impl AsRef<Path>) -> Result<DateSeries> {
    load_series(path.as_ref(), "market", true)
}

/// Annualized decimal risk-free rates.
pub fn load_riskfree_series(path: impl AsRef<Path>) -> Result<DateSeries> {
    load_series(path.as_ref(), "risk-free", false)
}
