use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::load::{parse_news_csv, parse_price_csv, parse_sector_csv};
use super::series::parse_series;
use super::synthetic::{SyntheticDataset, MARKET_FILE, NEWS_FILE, PRICES_FILE, RISKFREE_FILE, SECTORS_FILE};
use super::{
    align_news_to_trading_days, build_panel, common_calendar, load_market_series, load_news_csv, load_price_csv,
    load_riskfree_series, load_sector_csv, DataError, DateSeries, MergedPanel, Result,
};

/// Input file locations; benchmark series are optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub prices: PathBuf,
    pub news: PathBuf,
    pub sectors: PathBuf,
    #[serde(default)]
    pub market: Option<PathBuf>,
    #[serde(default)]
    pub riskfree: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            prices: dir.join(PRICES_FILE),
            news: dir.join(NEWS_FILE),
            sectors: dir.join(SECTORS_FILE),
            market: Some(dir.join(MARKET_FILE)),
            riskfree: Some(dir.join(RISKFREE_FILE)),
        }
    }
}

/// A merged panel plus its benchmark series.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub panel: MergedPanel,
    pub market: Option<DateSeries>,
    pub riskfree: Option<DateSeries>,
    /// News records after the final trading day.
    pub dropped_news: usize,
    /// News records for tickers without prices.
    pub unknown_news: usize,
}

impl Dataset {
    /// Market index levels on the panel calendar.
    pub fn market_levels(&self) -> Result<Vec<f64>> {
        let s = self.market.as_ref().ok_or(DataError::EmptySeries { what: "market".into() })?;
        s.align(&self.panel.calendar, "market")
    }

    /// Annualized risk-free rates on the panel calendar.
    pub fn riskfree_rates(&self) -> Result<Vec<f64>> {
        let s = self.riskfree.as_ref().ok_or(DataError::EmptySeries { what: "risk-free".into() })?;
        s.align(&self.panel.calendar, "risk-free")
    }
}

fn assemble(
    prices: super::PriceTable,
    news: Vec<super::NewsRecord>,
    sectors: super::SectorMap,
    market: Option<DateSeries>,
    riskfree: Option<DateSeries>,
) -> Result<Dataset> {
    let calendar = common_calendar(&prices)?;
    let aligned = align_news_to_trading_days(&news, &calendar);
    let build = build_panel(&prices, &aligned, &sectors)?;
    Ok(Dataset {
        panel: build.panel,
        market,
        riskfree,
        dropped_news: aligned.dropped,
        unknown_news: build.unknown_news,
    })
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let market = paths.market.as_ref().map(load_market_series).transpose()?;
    let riskfree = paths.riskfree.as_ref().map(load_riskfree_series).transpose()?;
    assemble(
        load_price_csv(&paths.prices)?,
        load_news_csv(&paths.news)?,
        load_sector_csv(&paths.sectors)?,
        market,
        riskfree,
    )
}

impl SyntheticDataset {
    /// Parses the generated files in memory.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let p = |name: &str| PathBuf::from(format!("<synthetic>/{name}"));
        assemble(
            parse_price_csv(self.prices.as_bytes(), &p(PRICES_FILE))?,
            parse_news_csv(self.news.as_bytes(), &p(NEWS_FILE))?,
            parse_sector_csv(self.sectors.as_bytes(), &p(SECTORS_FILE))?,
            Some(parse_series(self.market.as_bytes(), &p(MARKET_FILE), "market", true)?),
            Some(parse_series(self.riskfree.as_bytes(), &p(RISKFREE_FILE), "risk-free", false)?),
        )
    }
}
