//! Seeded synthetic market: correlated geometric random walks, Poisson news
//! flow with an optional planted sentiment→next-day-return signal, a market
//! index and a constant risk-free rate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

pub const PRICES_FILE: &str = "prices.csv";
pub const NEWS_FILE: &str = "news.csv";
pub const SECTORS_FILE: &str = "sectors.csv";
pub const MARKET_FILE: &str = "market.csv";
pub const RISKFREE_FILE: &str = "riskfree.csv";

const SECTORS: [&str; 11] = [
    "Information Technology",
    "Health Care",
    "Financials",
    "Energy",
    "Consumer Discretionary",
    "Industrials",
    "Communication Services",
    "Consumer Staples",
    "Utilities",
    "Real Estate",
    "Materials",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeSpec {
    /// Annualized drift per asset; missing entries are 0.
    pub drift: Vec<f64>,
    /// Annualized volatility per asset; missing entries use `default_vol`.
    pub vol: Vec<f64>,
    pub default_vol: f64,
    /// Pairwise correlation through a single common factor, in [0, 1].
    pub correlation: f64,
    /// Mean articles per ticker per trading day.
    pub news_rate: f64,
    /// Correlation between article sentiment and the next day's return
    /// shock, in [-1, 1]. 0 means no planted signal.
    pub sentiment_signal: f64,
    /// Number of distinct sectors to cycle through (1..=11).
    pub sectors: usize,
    pub start_date: NaiveDate,
    pub initial_price: f64,
    pub riskfree: f64,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        RegimeSpec {
            drift: Vec::new(),
            vol: Vec::new(),
            default_vol: 0.2,
            correlation: 0.3,
            news_rate: 2.0,
            sentiment_signal: 0.0,
            sectors: 4,
            start_date: NaiveDate::from_ymd_opt(2021, 1, 4).unwrap(),
            initial_price: 100.0,
            riskfree: 0.02,
        }
    }
}

impl RegimeSpec {
    fn drift_of(&self, i: usize) -> f64 {
        self.drift.get(i).copied().unwrap_or(0.0)
    }

    fn vol_of(&self, i: usize) -> f64 {
        self.vol.get(i).copied().unwrap_or(self.default_vol)
    }

    pub fn validate(&self, n_tickers: usize) -> Result<()> {
        let bad = |m: String| Err(DataError::InvalidRegime(m));
        if self.drift.len() > n_tickers || self.vol.len() > n_tickers {
            return bad(format!("more drift/vol entries than {n_tickers} tickers"));
        }
        if let Some(v) = self.vol.iter().chain([&self.default_vol]).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("volatility {v} must be non-negative"));
        }
        if self.drift.iter().any(|d| !d.is_finite()) {
            return bad("non-finite drift".into());
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation {} outside [0, 1]", self.correlation));
        }
        if !(-1.0..=1.0).contains(&self.sentiment_signal) {
            return bad(format!("sentiment_signal {} outside [-1, 1]", self.sentiment_signal));
        }
        if !(self.news_rate.is_finite() && self.news_rate >= 0.0) {
            return bad(format!("news_rate {} must be non-negative", self.news_rate));
        }
        if !(1..=SECTORS.len()).contains(&self.sectors) {
            return bad(format!("sectors must be in 1..={}", SECTORS.len()));
        }
        if !(self.initial_price.is_finite() && self.initial_price > 0.0) {
            return bad("initial_price must be positive".into());
        }
        if !self.riskfree.is_finite() {
            return bad("non-finite riskfree".into());
        }
        Ok(())
    }
}

/// The five CSV files as text.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub tickers: Vec<String>,
    pub prices: String,
    pub news: String,
    pub sectors: String,
    pub market: String,
    pub riskfree: String,
}

impl SyntheticDataset {
    pub fn files(&self) -> [(&'static str, &str); 5] {
        [
            (PRICES_FILE, &self.prices),
            (NEWS_FILE, &self.news),
            (SECTORS_FILE, &self.sectors),
            (MARKET_FILE, &self.market),
            (RISKFREE_FILE, &self.riskfree),
        ]
    }

    /// Writes all files into `dir` (created if needed) and returns their paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path, source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut out = Vec::new();
        for (name, body) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Weekdays starting at `start` (rolled forward to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn generate_synthetic(n_tickers: usize, n_days: usize, seed: u64, regime: &RegimeSpec) -> Result<SyntheticDataset> {
    if n_tickers < 2 {
        return Err(DataError::InvalidRegime(format!("need at least 2 tickers, got {n_tickers}")));
    }
    if n_days < 100 {
        return Err(DataError::InvalidRegime(format!("need at least 100 days, got {n_days}")));
    }
    regime.validate(n_tickers)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = business_days(regime.start_date, n_days);
    let tickers: Vec<String> = (0..n_tickers).map(|i| format!("SYN{i:02}")).collect();
    let dt = 1.0 / 252.0;
    let rho = regime.correlation;

    // shocks[t][i]: standardized return shock realized on day t (t >= 1)
    let mut shocks = vec![vec![0.0; n_tickers]; n_days];
    for row in shocks.iter_mut().skip(1) {
        let f: f64 = StandardNormal.sample(&mut rng);
        for z in row.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *z = rho.sqrt() * f + (1.0 - rho).sqrt() * e;
        }
    }
    let mut log_ret = vec![vec![0.0; n_tickers]; n_days];
    for t in 1..n_days {
        for i in 0..n_tickers {
            let (mu, sigma) = (regime.drift_of(i), regime.vol_of(i));
            log_ret[t][i] = (mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * shocks[t][i];
        }
    }

    let volume_dist = LogNormal::new(13.8, 0.3).expect("valid lognormal");
    let mut prices = String::from("date,ticker,open,high,low,close,volume\n");
    let mut close = vec![regime.initial_price; n_tickers];
    let mut bars = Vec::with_capacity(n_days * n_tickers);
    for t in 0..n_days {
        for i in 0..n_tickers {
            let prev = close[i];
            close[i] = prev * log_ret[t][i].exp();
            let sd = regime.vol_of(i) * dt.sqrt();
            let n1: f64 = StandardNormal.sample(&mut rng);
            let n2: f64 = StandardNormal.sample(&mut rng);
            let n3: f64 = StandardNormal.sample(&mut rng);
            let open = prev * (0.25 * sd * n1).exp();
            let high = open.max(close[i]) * (0.5 * sd * n2.abs()).exp();
            let low = open.min(close[i]) * (-0.5 * sd * n3.abs()).exp();
            let volume: f64 = Distribution::<f64>::sample(&volume_dist, &mut rng).round();
            bars.push((t, i, open, high, low, close[i], volume));
        }
    }
    for (t, i, open, high, low, c, volume) in bars {
        writeln!(prices, "{},{},{open:.6},{high:.6},{low:.6},{c:.6},{volume:.0}", days[t], tickers[i]).unwrap();
    }

    // News: articles published around day t hint at the shock of day t+1.
    let mut news = String::from("timestamp,ticker,sentiment,relevance\n");
    let s = regime.sentiment_signal;
    let poisson = (regime.news_rate > 0.0).then(|| Poisson::new(regime.news_rate).expect("positive rate"));
    for t in 0..n_days {
        for i in 0..n_tickers {
            let count = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            let next = if t + 1 < n_days { shocks[t + 1][i] } else { 0.0 };
            for _ in 0..count {
                let eps: f64 = StandardNormal.sample(&mut rng);
                let sentiment = (0.5 * (s * next + (1.0 - s * s).sqrt() * eps)).tanh();
                let relevance: f64 = rng.random_range(0.3..1.0);
                let mut date = days[t];
                // some Monday news was published over the weekend
                if date.weekday() == Weekday::Mon && rng.random_bool(0.3) {
                    date = date - Days::new(rng.random_range(1..=2));
                }
                let hour = rng.random_range(0..24);
                let minute = rng.random_range(0..60);
                writeln!(
                    news,
                    "{date}T{hour:02}:{minute:02}:00Z,{},{sentiment:.6},{relevance:.4}",
                    tickers[i]
                )
                .unwrap();
            }
        }
    }

    let mut sectors = String::from("ticker,sector\n");
    for (i, t) in tickers.iter().enumerate() {
        writeln!(sectors, "{t},{}", SECTORS[i % regime.sectors]).unwrap();
    }

    let mut market = String::from("date,value\n");
    let mut level = 4000.0;
    for t in 0..n_days {
        if t > 0 {
            let noise: f64 = StandardNormal.sample(&mut rng);
            level *= (log_ret[t].iter().sum::<f64>() / n_tickers as f64 + 0.002 * noise).exp();
        }
        writeln!(market, "{},{level:.6}", days[t]).unwrap();
    }

    let mut riskfree = String::from("date,value\n");
    for d in &days {
        writeln!(riskfree, "{d},{}", regime.riskfree).unwrap();
    }

    Ok(SyntheticDataset {
        tickers,
        prices,
        news,
        sectors,
        market,
        riskfree,
    })
}
