use super::{ForwardOutput, Result};
use crate::autodiff::{Graph, Tensor, Var};

/// `−(wᵀr) / √max(wᵀΣw, floor)` on plain slices; `sigma` is row-major `n × n`.
pub fn sharpe_loss_value(w: &[f64], r: &[f64], sigma: &[f64], floor: f64) -> f64 {
    let n = w.len();
    let ret: f64 = w.iter().zip(r).map(|(a, b)| a * b).sum();
    let mut var = 0.0;
    for i in 0..n {
        for j in 0..n {
            var += w[i] * sigma[i * n + j] * w[j];
        }
    }
    -ret / var.max(floor).sqrt()
}

/// Taped negative-Sharpe loss for one weight row `w (1 × n)`.
pub fn sharpe_loss(g: &mut Graph, w: Var, r: &[f64], sigma: &[f64], floor: f64) -> Result<Var> {
    let n = r.len();
    let r = g.constant(Tensor::column(r.to_vec()))?;
    let sigma = g.constant(Tensor::matrix(n, n, sigma.to_vec()))?;
    let ret = g.matmul(w, r)?;
    let sw = g.matmul(w, sigma)?;
    let wt = g.transpose(w)?;
    let var = g.matmul(sw, wt)?;
    let var = g.clamp_min(var, floor)?;
    let vol = g.sqrt(var)?;
    let ratio = g.div(ret, vol)?;
    Ok(g.neg(ratio)?)
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean loss over kept dates; `None` when every date was degenerate.
    pub loss: Option<Var>,
    pub kept: usize,
    pub skipped: usize,
}

/// Mean per-date loss over the non-degenerate rows of a forward pass.
/// `returns[b]` and `covs[b]` belong to the `b`-th date of the batch.
pub fn batch_loss(g: &mut Graph, out: &ForwardOutput, returns: &[&[f64]], covs: &[&[f64]], floor: f64) -> Result<LossOutput> {
    let mut terms = Vec::new();
    for (b, degenerate) in out.degenerate.iter().enumerate() {
        if *degenerate {
            continue;
        }
        let w = g.slice(out.weights, 0, b, 1)?;
        terms.push(sharpe_loss(g, w, returns[b], covs[b], floor)?);
    }
    let kept = terms.len();
    let skipped = out.degenerate.len() - kept;
    let loss = if terms.is_empty() {
        None
    } else {
        let all = g.concat(&terms, 0)?;
        Some(g.mean(all)?)
    };
    Ok(LossOutput { loss, kept, skipped })
}
