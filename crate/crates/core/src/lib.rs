pub mod autodiff;
pub mod backtest;
pub mod baselines;
pub mod data;
pub mod features;
pub mod graphs;
pub mod hparam;
pub mod model;
pub mod pipeline;
