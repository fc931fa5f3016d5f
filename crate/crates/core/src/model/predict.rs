use std::io::{Read, Write};
use std::ops::Range;

use chrono::NaiveDate;
use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{assemble_batch, forward, GraphSource, ModelConfig, ModelError, ModelParams, ParamVars, Result};
use crate::autodiff::Graph;
use crate::features::ModelInputs;

/// Dates per inference tape.
const PREDICT_CHUNK: usize = 64;

/// Daily allocations: `weights[k]` is decided at the close of `days[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    pub days: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    /// Days whose scores summed to ~0 and reused the previous allocation.
    pub fallbacks: Vec<usize>,
}

impl WeightMatrix {
    pub fn n_assets(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Portfolio return on each day after the first: yesterday's weights
    /// applied to today's simple returns. `daily_returns[t]` is the return
    /// from `t − 1` to `t`.
    pub fn realized(&self, daily_returns: &[Vec<f64>]) -> Vec<f64> {
        self.days
            .windows(2)
            .zip(&self.weights)
            .map(|(d, w)| w.iter().zip(&daily_returns[d[1]]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Eval-mode weights for every day of `range`. Dynamic graphs follow the
/// refresh schedule anchored at `range.start`.
pub fn predict_weights(
    params: &ModelParams,
    config: &ModelConfig,
    inputs: &ModelInputs,
    graphs: &mut GraphSource,
    range: Range<usize>,
) -> Result<WeightMatrix> {
    let n = inputs.n_assets;
    let days: Vec<usize> = range.clone().collect();
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(days.len());
    let mut fallbacks = Vec::new();
    // eval mode draws no random numbers; the generator only satisfies the signature
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in days.chunks(PREDICT_CHUNK) {
        let batch = assemble_batch(inputs, chunk, config.lookback, graphs, range.start, config.edge_bias)?;
        let mut g = Graph::new();
        let vars = ParamVars::register(&mut g, params, false)?;
        let out = forward(&mut g, &vars, config, &batch, false, &mut rng)?;
        let w = g.value(out.weights).data();
        for (b, &day) in chunk.iter().enumerate() {
            if out.degenerate[b] {
                let prev = weights.last().cloned().unwrap_or_else(|| vec![1.0 / n as f64; n]);
                warn!(
                    "day {day}: degenerate allocation (|sum of scores| = {:e}), reusing previous weights",
                    out.sums[b].abs()
                );
                fallbacks.push(day);
                weights.push(prev);
            } else {
                weights.push(w[b * n..(b + 1) * n].to_vec());
            }
        }
    }
    Ok(WeightMatrix {
        days,
        weights,
        fallbacks,
    })
}

/// `date,<tickers...>` with 12 significant digits.
pub fn write_weights_csv(w: &WeightMatrix, calendar: &[NaiveDate], tickers: &[String], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "date,{}", tickers.join(","))?;
    for (day, row) in w.days.iter().zip(&w.weights) {
        write!(out, "{}", calendar[*day])?;
        for v in row {
            write!(out, ",{v:.11e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a weight CSV back into dates, tickers and rows.
pub fn read_weights_csv(input: impl Read) -> Result<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    let bad = |m: String| ModelError::Checkpoint(m);
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.get(0) != Some("date") {
        return Err(bad("weight file must start with a date column".into()));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let (mut dates, mut rows) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(format!("{}: {e}", &rec[0])))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{v}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        dates.push(date);
        rows.push(row);
    }
    Ok((dates, tickers, rows))
}
