//! Seeded finite-difference checks for every primitive op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, AutodiffError, GradCheckConfig, GradCheckReport, Graph, Tensor, Var};

/// Worst-case result of checking one op over many random instances.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data)
}

/// Reduces `out` to a scalar with fixed random weights so every output
/// element carries a distinct upstream gradient.
fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Result<Var, AutodiffError> {
    let (r, c) = g.value(out).dims2()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = g.constant(random_matrix(&mut rng, r, c, -1.0, 1.0))?;
    let prod = g.mul(out, weights)?;
    g.sum(prod)
}

type Builder = fn(&mut Graph, &[Var], u64) -> Result<Var, AutodiffError>;

struct Case {
    op: &'static str,
    /// input shapes given random (rows, cols)
    shapes: fn(usize, usize) -> Vec<(usize, usize)>,
    range: (f64, f64),
    build: Builder,
}

/// Kink location for piecewise ops; samples are kept away from it so the
/// central difference never straddles the non-differentiable point.
fn kink(op: &str) -> Option<f64> {
    match op {
        "leaky_relu" | "elu" => Some(0.0),
        "clamp_min" => Some(0.1),
        _ => None,
    }
}

fn same2(r: usize, c: usize) -> Vec<(usize, usize)> {
    vec![(r, c), (r, c)]
}

fn one(r: usize, c: usize) -> Vec<(usize, usize)> {
    vec![(r, c)]
}

fn cases() -> Vec<Case> {
    vec![
        Case { op: "add", shapes: same2, range: (-2.0, 2.0), build: |g, x, s| { let y = g.add(x[0], x[1])?; weighted_sum(g, y, s) } },
        Case { op: "sub", shapes: same2, range: (-2.0, 2.0), build: |g, x, s| { let y = g.sub(x[0], x[1])?; weighted_sum(g, y, s) } },
        Case { op: "mul", shapes: same2, range: (-2.0, 2.0), build: |g, x, s| { let y = g.mul(x[0], x[1])?; weighted_sum(g, y, s) } },
        Case { op: "div", shapes: same2, range: (0.5, 2.0), build: |g, x, s| { let y = g.div(x[0], x[1])?; weighted_sum(g, y, s) } },
        Case {
            op: "matmul",
            shapes: |r, c| vec![(r, c), (c, r + 1)],
            range: (-1.0, 1.0),
            build: |g, x, s| { let y = g.matmul(x[0], x[1])?; weighted_sum(g, y, s) },
        },
        Case { op: "transpose", shapes: one, range: (-1.0, 1.0), build: |g, x, s| { let y = g.transpose(x[0])?; weighted_sum(g, y, s) } },
        Case {
            op: "concat",
            shapes: |r, c| vec![(r, c), (r + 1, c), (r, c + 1), (r, 1)],
            range: (-1.0, 1.0),
            build: |g, x, s| {
                let rows = g.concat(&[x[0], x[1]], 0)?;
                let cols = g.concat(&[x[2], x[3], x[2]], 1)?;
                let a = weighted_sum(g, rows, s)?;
                let b = weighted_sum(g, cols, s + 1)?;
                g.add(a, b)
            },
        },
        Case {
            op: "slice",
            shapes: |r, c| vec![(r + 1, c + 1)],
            range: (-1.0, 1.0),
            build: |g, x, s| {
                let (r, c) = g.value(x[0]).dims2()?;
                let rows = g.slice(x[0], 0, 1, r - 1)?;
                let cols = g.slice(x[0], 1, 0, c - 1)?;
                let a = weighted_sum(g, rows, s)?;
                let b = weighted_sum(g, cols, s + 1)?;
                g.add(a, b)
            },
        },
        Case {
            op: "reshape",
            shapes: one,
            range: (-1.0, 1.0),
            build: |g, x, s| {
                let n = g.value(x[0]).numel();
                let y = g.reshape(x[0], &[1, n])?;
                weighted_sum(g, y, s)
            },
        },
        Case {
            op: "sum",
            shapes: one,
            range: (-1.0, 1.0),
            build: |g, x, _| { let y = g.sum(x[0])?; let z = g.mul(y, y)?; g.sum(z) },
        },
        Case {
            op: "sum_axis",
            shapes: one,
            range: (-1.0, 1.0),
            build: |g, x, s| {
                let a = g.sum_axis(x[0], 0)?;
                let b = g.sum_axis(x[0], 1)?;
                let a = weighted_sum(g, a, s)?;
                let b = weighted_sum(g, b, s + 1)?;
                g.add(a, b)
            },
        },
        Case {
            op: "mean",
            shapes: one,
            range: (-1.0, 1.0),
            build: |g, x, _| { let y = g.mean(x[0])?; let z = g.mul(y, y)?; g.sum(z) },
        },
        Case {
            op: "broadcast",
            shapes: |r, c| vec![(1, c), (r, 1), (1, 1)],
            range: (-1.0, 1.0),
            build: |g, x, s| {
                let c = g.value(x[0]).shape()[1];
                let r = g.value(x[1]).shape()[0];
                let a = g.broadcast(x[0], r, c)?;
                let b = g.broadcast(x[1], r, c)?;
                let d = g.broadcast(x[2], r, c)?;
                let ab = g.mul(a, b)?;
                let y = g.add(ab, d)?;
                weighted_sum(g, y, s)
            },
        },
        Case { op: "scale", shapes: one, range: (-1.0, 1.0), build: |g, x, s| { let y = g.scale(x[0], -1.7)?; weighted_sum(g, y, s) } },
        Case { op: "add_scalar", shapes: one, range: (-1.0, 1.0), build: |g, x, s| { let y = g.add_scalar(x[0], 0.3)?; let y = g.mul(y, y)?; weighted_sum(g, y, s) } },
        Case { op: "neg", shapes: one, range: (-1.0, 1.0), build: |g, x, s| { let y = g.neg(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "exp", shapes: one, range: (-2.0, 2.0), build: |g, x, s| { let y = g.exp(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "log", shapes: one, range: (0.2, 3.0), build: |g, x, s| { let y = g.log(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "sqrt", shapes: one, range: (0.2, 3.0), build: |g, x, s| { let y = g.sqrt(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "tanh", shapes: one, range: (-2.0, 2.0), build: |g, x, s| { let y = g.tanh(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "sigmoid", shapes: one, range: (-3.0, 3.0), build: |g, x, s| { let y = g.sigmoid(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "leaky_relu", shapes: one, range: (-2.0, 2.0), build: |g, x, s| { let y = g.leaky_relu(x[0], 0.2)?; weighted_sum(g, y, s) } },
        Case { op: "elu", shapes: one, range: (-2.0, 2.0), build: |g, x, s| { let y = g.elu(x[0])?; weighted_sum(g, y, s) } },
        Case { op: "clamp_min", shapes: one, range: (-2.0, 2.0), build: |g, x, s| { let y = g.clamp_min(x[0], 0.1)?; weighted_sum(g, y, s) } },
        Case {
            op: "softmax",
            shapes: one,
            range: (-2.0, 2.0),
            build: |g, x, s| {
                let a = g.softmax(x[0], 1)?;
                let b = g.softmax(x[0], 0)?;
                let a = weighted_sum(g, a, s)?;
                let b = weighted_sum(g, b, s + 1)?;
                g.add(a, b)
            },
        },
        Case {
            op: "masked_softmax",
            shapes: |r, c| vec![(r, c + 1)],
            range: (-2.0, 2.0),
            build: |g, x, s| {
                let (r, c) = g.value(x[0]).dims2()?;
                // column 0 always kept so no row is fully masked
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5eed);
                let mask: Vec<bool> = (0..r * c).map(|k| k % c == 0 || rng.random_bool(0.6)).collect();
                let y = g.masked_softmax(x[0], 1, &mask)?;
                weighted_sum(g, y, s)
            },
        },
        Case {
            op: "dropout",
            shapes: one,
            range: (-2.0, 2.0),
            build: |g, x, s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xd0);
                let y = g.dropout(x[0], 0.3, true, &mut rng)?;
                let y = g.mul(y, y)?;
                weighted_sum(g, y, s)
            },
        },
    ]
}

/// Names of all primitives covered by [`primitive_checks`].
pub fn primitive_names() -> Vec<&'static str> {
    cases().iter().map(|c| c.op).collect()
}

/// Runs `instances` seeded random grad checks for every primitive.
pub fn primitive_checks(seed: u64, instances: usize, config: &GradCheckConfig) -> Result<Vec<OpCheck>, AutodiffError> {
    let mut out = Vec::new();
    for (ci, case) in cases().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64 * 7919));
        let mut worst: f64 = 0.0;
        for inst in 0..instances {
            let r = rng.random_range(1..=4);
            let c = rng.random_range(1..=4);
            let inputs: Vec<Tensor> = (case.shapes)(r, c)
                .into_iter()
                .map(|(rr, cc)| {
                    let t = random_matrix(&mut rng, rr, cc, case.range.0, case.range.1);
                    match kink(case.op) {
                        Some(k) => t.map(|v| if (v - k).abs() < 0.01 { v + 0.05 } else { v }),
                        None => t,
                    }
                })
                .collect();
            let inner_seed = seed ^ ((ci as u64) << 32) ^ inst as u64;
            let build = case.build;
            let report: GradCheckReport = grad_check(|g, x| build(g, x, inner_seed), &inputs, config)?;
            worst = worst.max(report.max_rel_error);
        }
        out.push(OpCheck {
            op: case.op,
            instances,
            max_rel_error: worst,
            passed: worst <= config.tolerance,
        });
    }
    Ok(out)
}
