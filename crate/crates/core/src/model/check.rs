use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{batch_loss, forward, Batch, ModelConfig, ModelParams, ParamVars, Result};
use crate::autodiff::{grad_check, AutodiffError, GradCheckConfig, GradCheckReport, Tensor};
use crate::features::Version;

/// Tiny network used for end-to-end gradient checks.
pub fn tiny_config(seed: u64) -> ModelConfig {
    let mut c = ModelConfig::preset(Version::V1);
    c.lstm_hidden = 4;
    c.gat_hidden = 4;
    c.lstm_layers = 2;
    c.lookback = 5;
    c.cov_window = 5;
    c.batch_size = 2;
    c.seed = seed;
    c.edge_bias = seed % 2 == 1;
    c
}

/// Input features per asset in the end-to-end check.
pub const CHECK_INPUT_DIM: usize = 4;

/// Finite-difference check of the negative-Sharpe loss composed with the
/// full forward pass (train mode, fixed dropout masks) with respect to
/// every parameter, on a random 2-date batch of 3 assets.
pub fn end_to_end_grad_check(seed: u64, check: &GradCheckConfig) -> Result<GradCheckReport> {
    let (n, dates) = (3usize, 2usize);
    let config = tiny_config(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init_with_input(&config, CHECK_INPUT_DIM, &mut rng);
    // move biases off their structured initial values
    for t in &mut params.tensors {
        t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
    let rows = n * dates;
    let f = CHECK_INPUT_DIM;
    let x: Vec<f64> = (0..config.lookback * rows * f).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut mask = vec![false; rows * rows];
    let mut edge = vec![0.0; rows * rows];
    for b in 0..dates {
        for i in 0..n {
            for j in 0..n {
                let k = (b * n + i) * rows + b * n + j;
                mask[k] = i == j || b == 0 || (i + j + seed as usize) % 2 == 0;
                edge[k] = if i == j { 1.0 } else { rng.random_range(-1.0..1.0) };
            }
        }
    }
    let batch = Batch {
        days: (0..dates).collect(),
        n,
        lookback: config.lookback,
        x: Tensor::matrix(config.lookback * rows, f, x),
        mask,
        edge: config.edge_bias.then(|| Tensor::matrix(rows, rows, edge)),
    };
    let returns: Vec<Vec<f64>> = (0..dates).map(|_| (0..n).map(|_| rng.random_range(-0.03..0.03)).collect()).collect();
    let covs: Vec<Vec<f64>> = (0..dates)
        .map(|_| {
            let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-0.02..0.02)).collect();
            let mut s = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    s[i * n + j] = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum::<f64>() + if i == j { 1e-4 } else { 0.0 };
                }
            }
            s
        })
        .collect();
    let layout = params.layout();
    let inputs: Vec<Tensor> = params.tensors.iter().map(|t| t.tensor()).collect();
    let dropout_seed = seed.wrapping_add(7);
    let wrap = |e: super::ModelError| AutodiffError::InvalidArgument(e.to_string());
    let report = grad_check(
        |g, vars| {
            let pv = ParamVars {
                vars: vars.to_vec(),
                layout,
            };
            let mut drop_rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let out = forward(g, &pv, &config, &batch, true, &mut drop_rng).map_err(wrap)?;
            let r: Vec<&[f64]> = returns.iter().map(Vec::as_slice).collect();
            let c: Vec<&[f64]> = covs.iter().map(Vec::as_slice).collect();
            let l = batch_loss(g, &out, &r, &c, config.variance_floor).map_err(wrap)?;
            l.loss.ok_or_else(|| AutodiffError::InvalidArgument("every date degenerate".into()))
        },
        &inputs,
        check,
    )?;
    Ok(report)
}
