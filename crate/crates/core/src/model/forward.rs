use rand::Rng;

use super::{Layout, ModelConfig, ModelError, ModelParams, Result};
use crate::autodiff::{Graph, Tensor, Var};
use crate::features::{FeatureError, ModelInputs};
use crate::graphs::{AssetGraph, DynamicGraphs};

/// Where each date's asset graph comes from.
#[derive(Debug, Clone)]
pub enum GraphSource {
    /// One graph fitted on the training period.
    Static(AssetGraph),
    /// Rolling graphs rebuilt on the refresh schedule.
    Dynamic(DynamicGraphs),
}

impl GraphSource {
    /// Graph in force on day `t` for a schedule anchored at `anchor`.
    pub fn graph_for(&mut self, anchor: usize, t: usize) -> &AssetGraph {
        match self {
            GraphSource::Static(g) => g,
            GraphSource::Dynamic(d) => d.for_day(anchor, t),
        }
    }
}

/// Network input for `B` dates.
#[derive(Debug, Clone)]
pub struct Batch {
    pub days: Vec<usize>,
    pub n: usize,
    pub lookback: usize,
    /// `(lookback · B · n) × F`, step-major: rows `s·B·n .. (s+1)·B·n` hold
    /// step `s` for every (date, asset) pair.
    pub x: Tensor,
    /// `(B·n) × (B·n)` attention mask, block-diagonal by date.
    pub mask: Vec<bool>,
    /// Edge weights in the same layout when attention is edge-biased.
    pub edge: Option<Tensor>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.days.len() * self.n
    }
}

pub fn assemble_batch(
    inputs: &ModelInputs,
    days: &[usize],
    lookback: usize,
    graphs: &mut GraphSource,
    anchor: usize,
    edge_bias: bool,
) -> Result<Batch> {
    let (n, f) = (inputs.n_assets, inputs.dim);
    let b = days.len();
    let rows = b * n;
    let mut x = vec![0.0; lookback * rows * f];
    let mut mask = vec![false; rows * rows];
    let mut edge = edge_bias.then(|| vec![0.0; rows * rows]);
    for (bi, &t) in days.iter().enumerate() {
        inputs.check_window(t, lookback)?;
        for s in 0..lookback {
            let day = t + 1 - lookback + s;
            let src = inputs.day(day);
            if let Some(a) = (0..n).find(|a| src[a * f..(a + 1) * f].iter().any(|v| !v.is_finite())) {
                return Err(FeatureError::NonFinite { t: day, asset: a }.into());
            }
            let dst = (s * rows + bi * n) * f;
            x[dst..dst + n * f].copy_from_slice(src);
        }
        let graph = graphs.graph_for(anchor, t);
        if graph.n != n {
            return Err(ModelError::Config(format!("graph has {} nodes, panel has {n} assets", graph.n)));
        }
        for i in 0..n {
            for j in 0..n {
                let k = (bi * n + i) * rows + bi * n + j;
                mask[k] = graph.connected(i, j);
                if let Some(e) = edge.as_mut() {
                    e[k] = graph.weight(i, j);
                }
            }
        }
    }
    Ok(Batch {
        days: days.to_vec(),
        n,
        lookback,
        x: Tensor::matrix(lookback * rows, f, x),
        mask,
        edge: edge.map(|e| Tensor::matrix(rows, rows, e)),
    })
}

/// Parameters registered on a tape, in [`ModelParams`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub vars: Vec<Var>,
    pub layout: Layout,
}

impl ParamVars {
    /// Records every tensor as a leaf; `trainable = false` skips gradients.
    pub fn register(g: &mut Graph, params: &ModelParams, trainable: bool) -> Result<Self> {
        let vars = params
            .tensors
            .iter()
            .map(|t| g.leaf(t.tensor(), trainable))
            .collect::<std::result::Result<_, _>>()?;
        Ok(ParamVars {
            vars,
            layout: params.layout(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Raw tanh scores, `B × n`.
    pub scores: Var,
    /// Normalized weights, `B × n`; rows flagged degenerate are placeholders.
    pub weights: Var,
    /// Σⱼ Wⱼ per date.
    pub sums: Vec<f64>,
    pub degenerate: Vec<bool>,
}

pub(crate) fn lstm(g: &mut Graph, p: &ParamVars, config: &ModelConfig, batch: &Batch, train: bool, rng: &mut impl Rng) -> Result<Var> {
    let rows = batch.rows();
    let h = config.lstm_hidden;
    let steps = batch.lookback;
    let mut input = g.constant(batch.x.clone())?;
    let mut last = None;
    for layer in 0..p.layout.lstm_layers {
        let (w_ih, w_hh, bias) = p.layout.lstm(layer);
        let (w_ih, w_hh, bias) = (p.vars[w_ih], p.vars[w_hh], p.vars[bias]);
        let projected = g.matmul(input, w_ih)?;
        let bias = g.broadcast(bias, steps * rows, 4 * h)?;
        let projected = g.add(projected, bias)?;
        let mut state: Option<(Var, Var)> = None;
        let top = layer + 1 == p.layout.lstm_layers;
        let mut outputs = Vec::with_capacity(if top { 0 } else { steps });
        for s in 0..steps {
            let mut gates = g.slice(projected, 0, s * rows, rows)?;
            if let Some((h_prev, _)) = state {
                let rec = g.matmul(h_prev, w_hh)?;
                gates = g.add(gates, rec)?;
            }
            let i = g.slice(gates, 1, 0, h)?;
            let i = g.sigmoid(i)?;
            let f = g.slice(gates, 1, h, h)?;
            let f = g.sigmoid(f)?;
            let cand = g.slice(gates, 1, 2 * h, h)?;
            let cand = g.tanh(cand)?;
            let o = g.slice(gates, 1, 3 * h, h)?;
            let o = g.sigmoid(o)?;
            let mut c = g.mul(i, cand)?;
            if let Some((_, c_prev)) = state {
                let keep = g.mul(f, c_prev)?;
                c = g.add(c, keep)?;
            }
            let squashed = g.tanh(c)?;
            let h_t = g.mul(o, squashed)?;
            state = Some((h_t, c));
            if !top {
                outputs.push(h_t);
            }
        }
        let (h_last, _) = state.expect("lookback is positive");
        if top {
            last = Some(h_last);
        } else {
            let seq = g.concat(&outputs, 0)?;
            input = g.dropout(seq, config.lstm_dropout, train, rng)?;
        }
    }
    Ok(last.expect("at least one LSTM layer"))
}

pub(crate) fn gat_layer(
    g: &mut Graph,
    p: &ParamVars,
    layer: usize,
    input: Var,
    config: &ModelConfig,
    batch: &Batch,
    train: bool,
    rng: &mut impl Rng,
) -> Result<Var> {
    let rows = batch.rows();
    let (w, a_src, a_dst, bias) = p.layout.gat(layer);
    let wh = g.matmul(input, p.vars[w])?;
    let src = g.matmul(wh, p.vars[a_src])?;
    let dst = g.matmul(wh, p.vars[a_dst])?;
    let dst = g.transpose(dst)?;
    let src = g.broadcast(src, rows, rows)?;
    let dst = g.broadcast(dst, rows, rows)?;
    let mut logits = g.add(src, dst)?;
    logits = g.leaky_relu(logits, config.gat_alpha)?;
    if let Some(e) = &batch.edge {
        let e = g.constant(e.clone())?;
        logits = g.add(logits, e)?;
    }
    let att = g.masked_softmax(logits, 1, &batch.mask)?;
    let att = g.dropout(att, config.gat_dropout, train, rng)?;
    let out = g.matmul(att, wh)?;
    let bias = g.broadcast(p.vars[bias], rows, config.gat_hidden)?;
    let out = g.add(out, bias)?;
    Ok(if layer == 0 { g.elu(out)? } else { out })
}

/// Divides each row of `scores (B × n)` by its sum. Rows with
/// |sum| < `eps` are flagged degenerate; their denominator is shifted to 1
/// so the tape stays finite, and callers must not use those rows.
pub fn normalize(g: &mut Graph, scores: Var, eps: f64) -> Result<(Var, Vec<f64>, Vec<bool>)> {
    let (b, n) = g.value(scores).dims2()?;
    let total = g.sum_axis(scores, 1)?;
    let sums = g.value(total).data().to_vec();
    let degenerate: Vec<bool> = sums.iter().map(|s| s.abs() < eps).collect();
    let denom = if degenerate.iter().any(|&d| d) {
        let shift: Vec<f64> = sums.iter().zip(&degenerate).map(|(s, &d)| if d { 1.0 - s } else { 0.0 }).collect();
        let shift = g.constant(Tensor::matrix(b, 1, shift))?;
        g.add(total, shift)?
    } else {
        total
    };
    let denom = g.broadcast(denom, b, n)?;
    let weights = g.div(scores, denom)?;
    Ok((weights, sums, degenerate))
}

/// Window → LSTM → two GAT layers → tanh head → per-date normalization.
pub fn forward(
    g: &mut Graph,
    p: &ParamVars,
    config: &ModelConfig,
    batch: &Batch,
    train: bool,
    rng: &mut impl Rng,
) -> Result<ForwardOutput> {
    let expected = g.shape(p.vars[p.layout.lstm(0).0])[0];
    let got = batch.x.shape()[1];
    if expected != got {
        return Err(ModelError::FeatureMismatch { expected, got });
    }
    let (b, n) = (batch.days.len(), batch.n);
    let rows = batch.rows();
    let hidden = lstm(g, p, config, batch, train, rng)?;
    let z = gat_layer(g, p, 0, hidden, config, batch, train, rng)?;
    let z = gat_layer(g, p, 1, z, config, batch, train, rng)?;
    let z = g.dropout(z, config.final_dropout, train, rng)?;
    let (hw, hb) = p.layout.head();
    let s = g.matmul(z, p.vars[hw])?;
    let hb = g.broadcast(p.vars[hb], rows, 1)?;
    let s = g.add(s, hb)?;
    let s = g.tanh(s)?;
    let scores = g.reshape(s, &[b, n])?;

    let (weights, sums, degenerate) = normalize(g, scores, config.normalization_eps)?;
    Ok(ForwardOutput {
        scores,
        weights,
        sums,
        degenerate,
    })
}
