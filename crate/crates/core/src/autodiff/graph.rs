use rand::Rng;

use super::tensor::{gemm, Tensor};
use super::AutodiffError;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Reshape(usize),
    Sum(usize),
    SumAxis { input: usize, axis: usize },
    Mean(usize),
    Broadcast(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Neg(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Tanh(usize),
    Sigmoid(usize),
    LeakyRelu(usize, f64),
    Elu(usize),
    ClampMin(usize, f64),
    Softmax { input: usize, axis: usize },
    Dropout { input: usize, factors: Vec<f64> },
    Map { input: usize, derivative: fn(f64) -> f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Execution-ordered tape of tensor operations.
///
/// Every op evaluates eagerly and records the rule needed to push gradients
/// back to its inputs; [`Graph::backward`] replays the tape in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros when `var` did not
    /// contribute to the loss.
    pub fn wrt(&self, var: Var) -> Tensor {
        let shape = self.shapes[var.0].clone();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn contributed(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

/// Group layout of a rank-2 tensor for an axis reduction.
#[derive(Clone, Copy)]
struct AxisLayout {
    groups: usize,
    len: usize,
    group_step: usize,
    elem_step: usize,
}

impl AxisLayout {
    fn new(rows: usize, cols: usize, axis: usize) -> Result<Self, AutodiffError> {
        match axis {
            0 => Ok(Self {
                groups: cols,
                len: rows,
                group_step: 1,
                elem_step: cols,
            }),
            1 => Ok(Self {
                groups: rows,
                len: cols,
                group_step: cols,
                elem_step: 1,
            }),
            _ => Err(AutodiffError::InvalidArgument(format!(
                "axis {axis} out of range for a matrix"
            ))),
        }
    }

    #[inline]
    fn index(&self, group: usize, k: usize) -> usize {
        group * self.group_step + k * self.elem_step
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn dims2(&self, var: Var) -> Result<(usize, usize), AutodiffError> {
        self.nodes[var.0].value.dims2()
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[usize],
    ) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input tensor; gradients are tracked when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var, AutodiffError> {
        self.leaf(value, true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        self.same_shape(name, a, b)?;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, value, op, &[a.0, b.0])
    }

    fn unary(
        &mut self,
        name: &'static str,
        a: Var,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let value = self.nodes[a.0].value.map(f);
        self.push(name, value, op, &[a.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.nodes[a.0].value.data(),
            (k as isize, 1),
            self.nodes[b.0].value.data(),
            (n as isize, 1),
            &mut out,
            false,
        );
        let value = Tensor::new(vec![m, n], out)?;
        self.push("matmul", value, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims2(a)?;
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], out)?;
        self.push("transpose", value, Op::Transpose(a.0), &[a.0])
    }

    /// Concatenates matrices along `axis` (0 = stack rows, 1 = join columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = *parts
            .first()
            .ok_or_else(|| AutodiffError::InvalidArgument("concat of nothing".into()))?;
        let (r0, c0) = self.dims2(first)?;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims2(p)?;
            let (fixed, fixed0, along) = if axis == 0 { (c, c0, r) } else { (r, r0, c) };
            if axis > 1 || fixed != fixed0 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: vec![r0, c0],
                    right: vec![r, c],
                });
            }
            total += along;
        }
        let (rows, cols) = if axis == 0 { (total, c0) } else { (r0, total) };
        let mut out = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                out.extend_from_slice(self.nodes[p.0].value.data());
            }
        } else {
            for i in 0..rows {
                for &p in parts {
                    let v = &self.nodes[p.0].value;
                    let c = v.shape()[1];
                    out.extend_from_slice(&v.data()[i * c..(i + 1) * c]);
                }
            }
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        let inputs: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push("concat", value, Op::Concat { inputs: inputs.clone(), axis }, &inputs)
    }

    /// Takes `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims2(a)?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent || len == 0 {
            return Err(AutodiffError::InvalidArgument(format!(
                "slice [{start}, {}) on axis {axis} of shape [{r}, {c}]",
                start + len
            )));
        }
        let src = self.nodes[a.0].value.data();
        let (value, shape) = if axis == 0 {
            (src[start * c..(start + len) * c].to_vec(), vec![len, c])
        } else {
            let mut out = Vec::with_capacity(r * len);
            for i in 0..r {
                out.extend_from_slice(&src[i * c + start..i * c + start + len]);
            }
            (out, vec![r, len])
        };
        let value = Tensor::new(shape, value)?;
        self.push("slice", value, Op::Slice { input: a.0, axis, start }, &[a.0])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let value = self.nodes[a.0].value.clone().reshaped(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a.0), &[a.0])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let v = &self.nodes[a.0].value;
        let m = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(a.0), &[a.0])
    }

    /// Sums a matrix along `axis`, keeping the reduced dimension as size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims2(a)?;
        let layout = AxisLayout::new(r, c, axis)?;
        let src = self.nodes[a.0].value.data();
        let out: Vec<f64> = (0..layout.groups)
            .map(|g| (0..layout.len).map(|k| src[layout.index(g, k)]).sum())
            .collect();
        let shape = if axis == 0 { vec![1, c] } else { vec![r, 1] };
        let value = Tensor::new(shape, out)?;
        self.push("sum_axis", value, Op::SumAxis { input: a.0, axis }, &[a.0])
    }

    /// Broadcasts a `(1,1)`, `(1,c)` or `(r,1)` matrix to `(rows, cols)`.
    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let (sr, sc) = self.dims2(a)?;
        if (sr != 1 && sr != rows) || (sc != 1 && sc != cols) {
            return Err(AutodiffError::ShapeMismatch {
                op: "broadcast",
                left: vec![sr, sc],
                right: vec![rows, cols],
            });
        }
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let si = if sr == 1 { 0 } else { i };
            for j in 0..cols {
                let sj = if sc == 1 { 0 } else { j };
                out.push(src[si * sc + sj]);
            }
        }
        let value = Tensor::new(vec![rows, cols], out)?;
        self.push("broadcast", value, Op::Broadcast(a.0), &[a.0])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutodiffError> {
        self.unary("scale", a, |x| x * factor, Op::Scale(a.0, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, AutodiffError> {
        self.unary("add_scalar", a, |x| x + offset, Op::AddScalar(a.0))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("neg", a, |x| -x, Op::Neg(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("exp", a, f64::exp, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("log", a, f64::ln, Op::Log(a.0))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn leaky_relu(&mut self, a: Var, negative_slope: f64) -> Result<Var, AutodiffError> {
        self.unary(
            "leaky_relu",
            a,
            |x| if x > 0.0 { x } else { negative_slope * x },
            Op::LeakyRelu(a.0, negative_slope),
        )
    }

    /// Exponential linear unit with unit scale.
    pub fn elu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.unary("elu", a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a.0))
    }

    /// Elementwise `max(x, floor)`.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var, AutodiffError> {
        self.unary("clamp_min", a, |x| x.max(floor), Op::ClampMin(a.0, floor))
    }

    /// User-supplied elementwise function with its derivative.
    pub fn map(&mut self, a: Var, f: fn(f64) -> f64, derivative: fn(f64) -> f64) -> Result<Var, AutodiffError> {
        self.unary("map", a, f, Op::Map { input: a.0, derivative })
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims2(a)?;
        self.softmax_impl("softmax", a, axis, &vec![true; r * c])
    }

    /// Softmax restricted to entries where `mask` is true; masked entries
    /// receive exactly zero weight.
    pub fn masked_softmax(&mut self, a: Var, axis: usize, mask: &[bool]) -> Result<Var, AutodiffError> {
        let numel = self.nodes[a.0].value.numel();
        if mask.len() != numel {
            return Err(AutodiffError::ShapeMismatch {
                op: "masked_softmax",
                left: self.shape(a).to_vec(),
                right: vec![mask.len()],
            });
        }
        self.softmax_impl("masked_softmax", a, axis, mask)
    }

    fn softmax_impl(&mut self, name: &'static str, a: Var, axis: usize, mask: &[bool]) -> Result<Var, AutodiffError> {
        let (r, c) = self.dims2(a)?;
        let layout = AxisLayout::new(r, c, axis)?;
        let src = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for g in 0..layout.groups {
            let mut max = f64::NEG_INFINITY;
            for k in 0..layout.len {
                let idx = layout.index(g, k);
                if mask[idx] {
                    max = max.max(src[idx]);
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(AutodiffError::FullyMasked { group: g });
            }
            let mut total = 0.0;
            for k in 0..layout.len {
                let idx = layout.index(g, k);
                if mask[idx] {
                    let e = (src[idx] - max).exp();
                    out[idx] = e;
                    total += e;
                }
            }
            for k in 0..layout.len {
                out[layout.index(g, k)] /= total;
            }
        }
        let value = Tensor::new(vec![r, c], out)?;
        self.push(name, value, Op::Softmax { input: a.0, axis }, &[a.0])
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`. In eval
    /// mode (or with `rate == 0`) the input is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let src = &self.nodes[a.0].value;
        let factors: Vec<f64> = (0..src.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
            .collect();
        let data = src.data().iter().zip(&factors).map(|(x, f)| x * f).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        self.push("dropout", value, Op::Dropout { input: a.0, factors }, &[a.0])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let val = |j: usize| self.nodes[j].value.data();
        let wants = |j: usize| self.nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| add_into(d, g));
                accumulate(grads, *b, wants(*b), g.len(), |d| add_into(d, g));
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| add_into(d, g));
                accumulate(grads, *b, wants(*b), g.len(), |d| {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g)
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate(grads, *a, wants(*a), g.len(), |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * vb[k];
                    }
                });
                accumulate(grads, *b, wants(*b), g.len(), |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] * va[k];
                    }
                });
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                accumulate(grads, *a, wants(*a), g.len(), |d| {
                    for k in 0..d.len() {
                        d[k] += g[k] / vb[k];
                    }
                });
                accumulate(grads, *b, wants(*b), g.len(), |d| {
                    for k in 0..d.len() {
                        d[k] -= g[k] * va[k] / (vb[k] * vb[k]);
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[*a].value.dims2().expect("matmul lhs");
                let n = self.nodes[*b].value.shape()[1];
                let (va, vb) = (val(*a), val(*b));
                // dA = G·Bᵀ, dB = Aᵀ·G
                accumulate(grads, *a, wants(*a), m * k, |d| {
                    gemm(m, n, k, g, (n as isize, 1), vb, (1, n as isize), d, true)
                });
                accumulate(grads, *b, wants(*b), k * n, |d| {
                    gemm(k, m, n, va, (1, k as isize), g, (n as isize, 1), d, true)
                });
            }
            Op::Transpose(a) => {
                let (r, c) = self.nodes[*a].value.dims2().expect("transpose input");
                accumulate(grads, *a, wants(*a), r * c, |d| {
                    for x in 0..r {
                        for y in 0..c {
                            d[x * c + y] += g[y * r + x];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let cols = node.value.shape()[1];
                let mut offset = 0;
                for &p in inputs {
                    let (pr, pc) = self.nodes[p].value.dims2().expect("concat part");
                    let start = offset;
                    accumulate(grads, p, wants(p), pr * pc, |d| {
                        if *axis == 0 {
                            add_into(d, &g[start * cols..(start + pr) * cols]);
                        } else {
                            for x in 0..pr {
                                for y in 0..pc {
                                    d[x * pc + y] += g[x * cols + start + y];
                                }
                            }
                        }
                    });
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { input, axis, start } => {
                let (r, c) = self.nodes[*input].value.dims2().expect("slice input");
                let (or, oc) = node.value.dims2().expect("slice output");
                let start = *start;
                accumulate(grads, *input, wants(*input), r * c, |d| {
                    if *axis == 0 {
                        add_into(&mut d[start * c..(start + or) * c], g);
                    } else {
                        for x in 0..or {
                            for y in 0..oc {
                                d[x * c + start + y] += g[x * oc + y];
                            }
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| add_into(d, g));
            }
            Op::Sum(a) => {
                let n = self.nodes[*a].value.numel();
                accumulate(grads, *a, wants(*a), n, |d| d.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::Mean(a) => {
                let n = self.nodes[*a].value.numel();
                let share = g[0] / n as f64;
                accumulate(grads, *a, wants(*a), n, |d| d.iter_mut().for_each(|d| *d += share));
            }
            Op::SumAxis { input, axis } => {
                let (r, c) = self.nodes[*input].value.dims2().expect("sum_axis input");
                let layout = AxisLayout::new(r, c, *axis).expect("axis");
                accumulate(grads, *input, wants(*input), r * c, |d| {
                    for grp in 0..layout.groups {
                        for k in 0..layout.len {
                            d[layout.index(grp, k)] += g[grp];
                        }
                    }
                });
            }
            Op::Broadcast(a) => {
                let (sr, sc) = self.nodes[*a].value.dims2().expect("broadcast input");
                let (rows, cols) = node.value.dims2().expect("broadcast output");
                accumulate(grads, *a, wants(*a), sr * sc, |d| {
                    for x in 0..rows {
                        let si = if sr == 1 { 0 } else { x };
                        for y in 0..cols {
                            let sj = if sc == 1 { 0 } else { y };
                            d[si * sc + sj] += g[x * cols + y];
                        }
                    }
                });
            }
            Op::Scale(a, factor) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g * factor)
                });
            }
            Op::AddScalar(a) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| add_into(d, g));
            }
            Op::Neg(a) => {
                accumulate(grads, *a, wants(*a), g.len(), |d| {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g)
                });
            }
            Op::Exp(a) => elementwise(grads, *a, wants(*a), g, |k| out[k]),
            Op::Log(a) => {
                let x = val(*a);
                elementwise(grads, *a, wants(*a), g, |k| 1.0 / x[k])
            }
            Op::Sqrt(a) => elementwise(grads, *a, wants(*a), g, |k| 0.5 / out[k]),
            Op::Tanh(a) => elementwise(grads, *a, wants(*a), g, |k| 1.0 - out[k] * out[k]),
            Op::Sigmoid(a) => elementwise(grads, *a, wants(*a), g, |k| out[k] * (1.0 - out[k])),
            Op::LeakyRelu(a, slope) => {
                let x = val(*a);
                elementwise(grads, *a, wants(*a), g, |k| if x[k] > 0.0 { 1.0 } else { *slope })
            }
            Op::Elu(a) => {
                let x = val(*a);
                elementwise(grads, *a, wants(*a), g, |k| if x[k] > 0.0 { 1.0 } else { out[k] + 1.0 })
            }
            Op::ClampMin(a, floor) => {
                let x = val(*a);
                elementwise(grads, *a, wants(*a), g, |k| if x[k] > *floor { 1.0 } else { 0.0 })
            }
            Op::Map { input, derivative } => {
                let x = val(*input);
                elementwise(grads, *input, wants(*input), g, |k| derivative(x[k]))
            }
            Op::Softmax { input, axis } => {
                let (r, c) = node.value.dims2().expect("softmax output");
                let layout = AxisLayout::new(r, c, *axis).expect("axis");
                accumulate(grads, *input, wants(*input), r * c, |d| {
                    for grp in 0..layout.groups {
                        let dot: f64 = (0..layout.len)
                            .map(|k| {
                                let idx = layout.index(grp, k);
                                g[idx] * out[idx]
                            })
                            .sum();
                        for k in 0..layout.len {
                            let idx = layout.index(grp, k);
                            d[idx] += out[idx] * (g[idx] - dot);
                        }
                    }
                });
            }
            Op::Dropout { input, factors } => {
                elementwise(grads, *input, wants(*input), g, |k| factors[k])
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn accumulate(
    grads: &mut [Option<Vec<f64>>],
    target: usize,
    wanted: bool,
    len: usize,
    f: impl FnOnce(&mut [f64]),
) {
    if !wanted {
        return;
    }
    let slot = grads[target].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

fn elementwise(
    grads: &mut [Option<Vec<f64>>],
    target: usize,
    wanted: bool,
    g: &[f64],
    local: impl Fn(usize) -> f64,
) {
    accumulate(grads, target, wanted, g.len(), |d| {
        for k in 0..d.len() {
            d[k] += g[k] * local(k);
        }
    });
}
