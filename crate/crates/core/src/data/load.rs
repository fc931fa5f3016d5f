use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, NaiveTime};

use super::{parse_date, DataError, NewsRecord, PriceBar, Result, SectorMap};

/// Per-ticker price bars, each series sorted by date without duplicates.
pub type PriceTable = BTreeMap<String, Vec<PriceBar>>;

pub(crate) const PRICE_HEADER: [&str; 7] = ["date", "ticker", "open", "high", "low", "close", "volume"];
pub(crate) const NEWS_HEADER: [&str; 4] = ["timestamp", "ticker", "sentiment", "relevance"];
pub(crate) const SECTOR_HEADER: [&str; 2] = ["ticker", "sector"];

/// Reads a headed CSV and hands each record with its 1-based line number to
/// `row`. The header must match `expected` (case-insensitive); `path` only
/// labels errors.
pub(crate) fn read_rows_from(
    input: impl Read,
    path: &Path,
    expected: &[&'static str],
    mut row: impl FnMut(u64, &csv::StringRecord) -> std::result::Result<(), String>,
) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header = reader.headers().map_err(csv_err)?.clone();
    let found: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found.iter().map(String::as_str).ne(expected.iter().copied()) {
        if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
            return Err(DataError::NoRows { path: path.to_path_buf() });
        }
        return Err(DataError::Header {
            path: path.to_path_buf(),
            found,
            expected: expected.to_vec(),
        });
    }
    let mut count = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(DataError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        row(line, &record).map_err(|message| DataError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        })?;
        count += 1;
    }
    Ok(count)
}

fn number(field: &str, name: &str) -> std::result::Result<f64, String> {
    field.parse::<f64>().map_err(|_| format!("{name}: not a number: {field:?}"))
}

/// Loads `date,ticker,open,high,low,close,volume` rows.
///
/// Identical duplicate rows are collapsed; duplicates with differing values
/// are rejected.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_price_csv(file, path)
}

pub(crate) fn parse_price_csv(input: impl Read, path: &Path) -> Result<PriceTable> {
    let mut table: PriceTable = BTreeMap::new();
    let count = read_rows_from(input, path, &PRICE_HEADER, |_, rec| {
        let bar = PriceBar {
            date: parse_date(&rec[0])?,
            open: number(&rec[2], "open")?,
            high: number(&rec[3], "high")?,
            low: number(&rec[4], "low")?,
            close: number(&rec[5], "close")?,
            volume: number(&rec[6], "volume")?,
        };
        bar.validate()?;
        let ticker = rec[1].to_string();
        if ticker.is_empty() {
            return Err("empty ticker".into());
        }
        table.entry(ticker).or_default().push(bar);
        Ok(())
    })?;
    if count == 0 {
        return Err(DataError::NoRows { path: path.to_path_buf() });
    }
    for (ticker, bars) in table.iter_mut() {
        bars.sort_by_key(|b| b.date);
        let mut deduped: Vec<PriceBar> = Vec::with_capacity(bars.len());
        for bar in bars.drain(..) {
            match deduped.last() {
                Some(prev) if prev.date == bar.date => {
                    if *prev != bar {
                        return Err(DataError::DuplicateConflict {
                            ticker: ticker.clone(),
                            date: bar.date,
                        });
                    }
                }
                _ => deduped.push(bar),
            }
        }
        *bars = deduped;
    }
    Ok(table)
}

/// Accepts RFC 3339, `YYYY-MM-DD[T| ]HH:MM:SS`, or a bare date (midnight).
/// Offsets are not converted: the calendar date is the one written.
pub(crate) fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    parse_date(s)
        .map(|d| d.and_time(NaiveTime::MIN))
        .map_err(|_| format!("bad timestamp {s:?}"))
}

/// Loads `timestamp,ticker,sentiment,relevance` rows sorted by timestamp.
/// An empty file (header only) is a valid, empty news set.
pub fn load_news_csv(path: impl AsRef<Path>) -> Result<Vec<NewsRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_news_csv(file, path)
}

pub(crate) fn parse_news_csv(input: impl Read, path: &Path) -> Result<Vec<NewsRecord>> {
    let mut records = Vec::new();
    let result = read_rows_from(input, path, &NEWS_HEADER, |_, rec| {
        let sentiment = number(&rec[2], "sentiment")?;
        if !(-1.0..=1.0).contains(&sentiment) {
            return Err(format!("sentiment {sentiment} outside [-1, 1]"));
        }
        let relevance = number(&rec[3], "relevance")?;
        if !(0.0..=1.0).contains(&relevance) {
            return Err(format!("relevance {relevance} outside [0, 1]"));
        }
        records.push(NewsRecord {
            timestamp: parse_timestamp(&rec[0])?,
            ticker: rec[1].to_string(),
            sentiment,
            relevance,
        });
        Ok(())
    });
    match result {
        Ok(_) | Err(DataError::NoRows { .. }) => {}
        Err(e) => return Err(e),
    }
    records.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.ticker.cmp(&b.ticker)));
    Ok(records)
}

pub fn load_sector_csv(path: impl AsRef<Path>) -> Result<SectorMap> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sector_csv(file, path)
}

pub(crate) fn parse_sector_csv(input: impl Read, path: &Path) -> Result<SectorMap> {
    let mut map = SectorMap::default();
    let count = read_rows_from(input, path, &SECTOR_HEADER, |_, rec| {
        if rec[1].is_empty() {
            return Err(format!("empty sector for {}", &rec[0]));
        }
        if let Some(prev) = map.get(&rec[0]) {
            if prev != &rec[1] {
                return Err(format!("ticker {} listed with two sectors", &rec[0]));
            }
        }
        map.insert(&rec[0], &rec[1]);
        Ok(())
    })?;
    if count == 0 {
        return Err(DataError::NoRows { path: path.to_path_buf() });
    }
    Ok(map)
}
