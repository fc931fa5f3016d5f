//! Glue from a merged panel to model-ready training data and back out to
//! strategy reports.

use std::ops::Range;

use thiserror::Error;

use crate::backtest::{BacktestError, BacktestReport};
use crate::baselines::{capm_mvo_backtest, equal_weight, returns_from_levels, BaselineError, CapmConfig, CapmMvoOutcome};
use crate::data::{DataError, Dataset, MergedPanel};
use crate::features::{FeatureError, FeaturePipeline, GraphKind, Version};
use crate::graphs::{log_return_panel, static_graph, AssetGraph, DynamicGraphs, GraphError};
use crate::model::{GraphSource, LossTargets, ModelError, TrainingData, WeightMatrix};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Preprocessing fitted on one range plus the tensors it produces.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub pipeline: FeaturePipeline,
    pub static_graph: Option<AssetGraph>,
    pub data: TrainingData,
}

/// Fits the standardizer (and PCA) and, for static-graph versions, the
/// correlation graph on `fit` days, then transforms the whole panel.
pub fn prepare(panel: &MergedPanel, version: Version, fit: Range<usize>, cov_window: usize) -> Result<Prepared> {
    let pipeline = FeaturePipeline::fit(panel, version, fit.clone())?;
    restore(panel, pipeline, None, fit, cov_window)
}

/// Rebuilds training data from a saved pipeline; the static graph is
/// refitted when not supplied.
pub fn restore(
    panel: &MergedPanel,
    pipeline: FeaturePipeline,
    graph: Option<AssetGraph>,
    fit: Range<usize>,
    cov_window: usize,
) -> Result<Prepared> {
    let inputs = pipeline.transform(panel)?;
    let (graphs, static_graph) = match pipeline.version.graph_kind() {
        GraphKind::Static => {
            let g = match graph {
                Some(g) => g,
                None => static_graph(&log_return_panel(panel), &panel.tickers, fit)?,
            };
            (GraphSource::Static(g.clone()), Some(g))
        }
        GraphKind::Dynamic => (GraphSource::Dynamic(DynamicGraphs::new(panel)), None),
    };
    Ok(Prepared {
        pipeline,
        static_graph,
        data: TrainingData {
            inputs,
            targets: LossTargets::new(panel, cov_window),
            graphs,
        },
    })
}

/// Day-indexed simple asset returns (`[0]` is zeros).
pub fn daily_returns(panel: &MergedPanel) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; panel.n_assets()]];
    out.extend((1..panel.n_days()).map(|t| panel.simple_returns(t)));
    out
}

/// Report for a weight matrix whose days are contiguous.
pub fn report(name: &str, panel: &MergedPanel, weights: &WeightMatrix) -> Result<BacktestReport> {
    let returns = daily_returns(panel);
    let dates = weights.days.iter().map(|&d| panel.calendar[d]).collect();
    let aligned: Vec<Vec<f64>> = weights.days.iter().map(|&d| returns[d].clone()).collect();
    Ok(BacktestReport::new(name, dates, weights.weights.clone(), &aligned)?)
}

pub fn equal_weight_report(panel: &MergedPanel, days: Range<usize>) -> Result<BacktestReport> {
    report("equal_weight", panel, &equal_weight(panel.n_assets(), days))
}

/// Rolling CAPM-MVO on `days`, using the dataset's market and risk-free series.
pub fn capm_mvo(dataset: &Dataset, days: Range<usize>, config: &CapmConfig) -> Result<(CapmMvoOutcome, BacktestReport)> {
    let panel = &dataset.panel;
    let market = returns_from_levels(&dataset.market_levels()?);
    let rf = dataset.riskfree_rates()?;
    let out = capm_mvo_backtest(&daily_returns(panel), &market, &rf, days, config)?;
    let rep = report("capm_mvo", panel, &out.weights)?;
    Ok((out, rep))
}
