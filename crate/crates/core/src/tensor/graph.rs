use rand::Rng;

use super::kernels::{self, ConvGeometry, LrnParams};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernels: Var,
        bias: Var,
        geo: ConvGeometry,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Lrn {
        input: Var,
        params: LrnParams,
        denom: Vec<f64>,
    },
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Mask {
        input: Var,
        mask: Vec<f64>,
    },
    PositionwiseLinear {
        x: Var,
        w: Var,
        b: Var,
    },
    Gate {
        features: Var,
        weights: Var,
    },
    Reshape(Var),
    Stack(Vec<Var>),
    WeightedRows {
        weights: Var,
        rows: Var,
    },
    NormalizeSum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A single-use tape of tensor operations.
///
/// Nodes are appended in evaluation order, so the node list is always a
/// topological order of the computation. A graph is built for one forward
/// pass, differentiated once, and dropped.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A trainable leaf; its gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).needs_grad
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn check_hwc(&self, v: Var, what: &str) -> Result<(usize, usize, usize)> {
        match *self.shape(v) {
            [h, w, c] => Ok((h, w, c)),
            ref s => Err(Error::shape(format!("{what} expects [H, W, C], got {s:?}"))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (h, w, cin) = self.check_hwc(input, "conv2d input")?;
        let (k, kcin, cout) = match *self.shape(kernels) {
            [k1, k2, ci, co] if k1 == k2 => (k1, ci, co),
            ref s => {
                return Err(Error::shape(format!(
                    "conv2d kernels must be [K, K, Cin, Cout], got {s:?}"
                )))
            }
        };
        if kcin != cin {
            return Err(Error::shape(format!(
                "conv2d: input has {cin} channels but kernels expect {kcin}"
            )));
        }
        if self.shape(bias) != [cout] {
            return Err(Error::shape(format!(
                "conv2d: bias shape {:?} does not match {cout} output channels",
                self.shape(bias)
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        if k == 0 || k > h + 2 * padding || k > w + 2 * padding {
            return Err(Error::shape(format!(
                "conv2d: kernel {k} does not fit input {h}x{w} with padding {padding}"
            )));
        }
        let geo = ConvGeometry {
            height: h,
            width: w,
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            stride,
            padding,
        };
        let out = kernels::conv2d_forward(
            &geo,
            self.value(input).data(),
            self.value(kernels).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new([geo.out_height(), geo.out_width(), cout], out)?;
        let needs = self.needs(&[input, kernels, bias]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernels,
                bias,
                geo,
            },
            needs,
        ))
    }

    pub fn maxpool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        let (h, w, c) = self.check_hwc(input, "maxpool2d input")?;
        if window == 0 || stride == 0 {
            return Err(Error::invalid("maxpool2d window and stride must be >= 1"));
        }
        if window > h || window > w {
            return Err(Error::shape(format!(
                "maxpool2d: window {window} larger than {h}x{w}"
            )));
        }
        let (out, argmax, oh, ow) =
            kernels::maxpool_forward(self.value(input).data(), h, w, c, window, stride);
        let needs = self.needs(&[input]);
        Ok(self.push(
            Tensor::new([oh, ow, c], out)?,
            Op::MaxPool { input, argmax },
            needs,
        ))
    }

    pub fn local_response_norm(&mut self, input: Var, params: LrnParams) -> Result<Var> {
        let (_, _, c) = self.check_hwc(input, "local_response_norm input")?;
        if params.size == 0 || params.k <= 0.0 || params.alpha < 0.0 || params.beta <= 0.0 {
            return Err(Error::invalid(format!("invalid LRN parameters {params:?}")));
        }
        let (out, denom) = kernels::lrn_forward(self.value(input).data(), c, &params);
        let value = Tensor::new(self.shape(input).to_vec(), out)?;
        let needs = self.needs(&[input]);
        Ok(self.push(
            value,
            Op::Lrn {
                input,
                params,
                denom,
            },
            needs,
        ))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(&[x]);
        self.push(value, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Absolute value; the subgradient at zero is zero.
    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.unary(x, |v| v * factor, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Var {
        self.unary(x, |v| v + offset, Op::AddScalar(x))
    }

    /// `w · x + b` for `x: [din]`, `w: [dout, din]`, `b: [dout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        self.affine(x, w, Some(b))
    }

    /// `w · x` for `x: [din]`, `w: [dout, din]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.affine(x, w, None)
    }

    fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (dout, din) = match *self.shape(w) {
            [o, i] => (o, i),
            ref s => {
                return Err(Error::shape(format!(
                    "linear weight must be [dout, din], got {s:?}"
                )))
            }
        };
        if self.shape(x) != [din] {
            return Err(Error::shape(format!(
                "linear: input shape {:?} does not match weight inner dimension {din}",
                self.shape(x)
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(Error::shape(format!(
                    "linear: bias shape {:?} does not match output dimension {dout}",
                    self.shape(b)
                )));
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out: Vec<f64> = wv
            .chunks_exact(din)
            .map(|row| row.iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        if let Some(b) = b {
            for (o, bv) in out.iter_mut().zip(self.value(b).data()) {
                *o += bv;
            }
        }
        let mut deps = vec![x, w];
        deps.extend(b);
        let needs = self.needs(&deps);
        Ok(self.push(Tensor::vector(out), Op::Linear { x, w, b }, needs))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Mean of all elements as a rank-0 tensor.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::shape("mean of an empty tensor"));
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(x), needs))
    }

    /// Inverted dropout. In training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`;
    /// otherwise this is the identity and returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::Mask { input: x, mask }, needs))
    }

    /// Per-position affine map over the channel vectors of an `[M, N, din]`
    /// volume. `w` is `[P, dout, din]` with `P` either 1 (shared) or `M·N`
    /// (one matrix per position); `b` is `[P', dout]` with the same rule.
    pub fn positionwise_linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (m, n, din) = self.check_hwc(x, "positionwise_linear input")?;
        let positions = m * n;
        let (pw, dout, wdin) = match *self.shape(w) {
            [p, o, i] => (p, o, i),
            ref s => {
                return Err(Error::shape(format!(
                    "positionwise weights must be [P, dout, din], got {s:?}"
                )))
            }
        };
        if wdin != din || (pw != 1 && pw != positions) {
            return Err(Error::shape(format!(
                "positionwise weights {:?} incompatible with input {:?}",
                self.shape(w),
                self.shape(x)
            )));
        }
        match *self.shape(b) {
            [pb, o] if o == dout && (pb == 1 || pb == positions) => {}
            ref s => {
                return Err(Error::shape(format!(
                    "positionwise bias {s:?} incompatible with weights"
                )))
            }
        }
        let out = kernels::positionwise_linear_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            positions,
            din,
            dout,
        );
        let needs = self.needs(&[x, w, b]);
        Ok(self.push(
            Tensor::new([m, n, dout], out)?,
            Op::PositionwiseLinear { x, w, b },
            needs,
        ))
    }

    /// Multiplies every channel of `features: [M, N, C]` by `weights: [M, N]`.
    pub fn gate(&mut self, features: Var, weights: Var) -> Result<Var> {
        let (m, n, c) = self.check_hwc(features, "gate features")?;
        let wshape = self.shape(weights);
        if wshape != [m, n] && wshape != [m, n, 1] {
            return Err(Error::shape(format!(
                "gate: weights {wshape:?} do not match feature grid {m}x{n}"
            )));
        }
        let f = self.value(features).data();
        let a = self.value(weights).data();
        let data = f
            .chunks_exact(c)
            .zip(a)
            .flat_map(|(px, &w)| px.iter().map(move |v| v * w))
            .collect();
        let needs = self.needs(&[features, weights]);
        Ok(self.push(
            Tensor::new([m, n, c], data)?,
            Op::Gate { features, weights },
            needs,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// Stacks equally-shaped values along a new leading axis.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        let first = *items
            .first()
            .ok_or_else(|| Error::shape("stack of zero tensors"))?;
        let inner = self.shape(first).to_vec();
        let mut data = Vec::with_capacity(items.len() * self.value(first).len());
        for &v in items {
            if self.shape(v) != inner.as_slice() {
                return Err(Error::shape(format!(
                    "stack: shape {:?} differs from {inner:?}",
                    self.shape(v)
                )));
            }
            data.extend_from_slice(self.value(v).data());
        }
        let mut shape = vec![items.len()];
        shape.extend(inner);
        let needs = self.needs(items);
        Ok(self.push(Tensor::new(shape, data)?, Op::Stack(items.to_vec()), needs))
    }

    /// `sum_t weights[t] * rows[t, :]` for `weights: [T]`, `rows: [T, n]`.
    pub fn weighted_rows(&mut self, weights: Var, rows: Var) -> Result<Var> {
        let (t, n) = match *self.shape(rows) {
            [t, n] => (t, n),
            ref s => {
                return Err(Error::shape(format!(
                    "weighted_rows expects [T, n] rows, got {s:?}"
                )))
            }
        };
        if self.shape(weights) != [t] {
            return Err(Error::shape(format!(
                "weighted_rows: {} weights for {t} rows",
                self.value(weights).len()
            )));
        }
        let o = self.value(weights).data();
        let z = self.value(rows).data();
        let mut s = vec![0.0; n];
        for (ot, row) in o.iter().zip(z.chunks_exact(n)) {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += ot * v;
            }
        }
        let needs = self.needs(&[weights, rows]);
        Ok(self.push(Tensor::vector(s), Op::WeightedRows { weights, rows }, needs))
    }

    /// Divides a vector by its sum.
    pub fn normalize_sum(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.shape().len() != 1 || v.is_empty() {
            return Err(Error::shape(format!(
                "normalize_sum expects a nonempty vector, got {:?}",
                v.shape()
            )));
        }
        let total: f64 = v.data().iter().sum();
        if total == 0.0 || !total.is_finite() {
            return Err(Error::invalid(format!(
                "normalize_sum: degenerate total {total}"
            )));
        }
        let data = v.data().iter().map(|e| e / total).collect();
        let needs = self.needs(&[x]);
        Ok(self.push(Tensor::vector(data), Op::NormalizeSum(x), needs))
    }

    /// Reverse-mode sweep from a one-element `loss`. Afterwards every node
    /// that `loss` depends on through differentiable operations has a
    /// gradient available via [`Graph::grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.needs_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, delta: &[f64]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta.to_vec()),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                geo,
            } => {
                let (di, dk, db) = kernels::conv2d_backward(geo, val(*input), val(*kernels), g);
                acc(*input, &di);
                acc(*kernels, &dk);
                acc(*bias, &db);
            }
            Op::MaxPool { input, argmax } => {
                let mut di = vec![0.0; val(*input).len()];
                for (&src, gv) in argmax.iter().zip(g) {
                    di[src] += gv;
                }
                acc(*input, &di);
            }
            Op::Lrn {
                input,
                params,
                denom,
            } => {
                let c = *self.nodes[input.0].value.shape().last().expect("rank 3");
                let di = kernels::lrn_backward(val(*input), denom, g, c, params);
                acc(*input, &di);
            }
            Op::Relu(x) => {
                let d: Vec<f64> = val(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, gv)| if v > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(*x, &d);
            }
            Op::Sigmoid(x) => {
                let d: Vec<f64> = out
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(s, gv)| gv * s * (1.0 - s))
                    .collect();
                acc(*x, &d);
            }
            Op::Tanh(x) => {
                let d: Vec<f64> = out
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(t, gv)| gv * (1.0 - t * t))
                    .collect();
                acc(*x, &d);
            }
            Op::Abs(x) => {
                let d: Vec<f64> = val(*x)
                    .iter()
                    .zip(g)
                    .map(|(&v, gv)| {
                        if v > 0.0 {
                            *gv
                        } else if v < 0.0 {
                            -gv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(*x, &d);
            }
            Op::Linear { x, w, b } => {
                let xv = val(*x);
                let wv = val(*w);
                let din = xv.len();
                let mut dx = vec![0.0; din];
                let mut dw = vec![0.0; wv.len()];
                for (o, &gv) in g.iter().enumerate() {
                    let row = &wv[o * din..][..din];
                    let drow = &mut dw[o * din..][..din];
                    for i in 0..din {
                        dx[i] += gv * row[i];
                        drow[i] = gv * xv[i];
                    }
                }
                acc(*x, &dx);
                acc(*w, &dw);
                if let Some(b) = b {
                    acc(*b, g);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g);
                acc(*b, g);
            }
            Op::Sub(a, b) => {
                acc(*a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                acc(*b, &neg);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g.iter().zip(val(*b)).map(|(gv, bv)| gv * bv).collect();
                let db: Vec<f64> = g.iter().zip(val(*a)).map(|(gv, av)| gv * av).collect();
                acc(*a, &da);
                acc(*b, &db);
            }
            Op::Scale(x, f) => {
                let d: Vec<f64> = g.iter().map(|gv| gv * f).collect();
                acc(*x, &d);
            }
            Op::AddScalar(x) | Op::Reshape(x) => acc(*x, g),
            Op::Sum(x) => {
                let d = vec![g[0]; val(*x).len()];
                acc(*x, &d);
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let d = vec![g[0] / n as f64; n];
                acc(*x, &d);
            }
            Op::Mask { input, mask } => {
                let d: Vec<f64> = g.iter().zip(mask).map(|(gv, m)| gv * m).collect();
                acc(*input, &d);
            }
            Op::PositionwiseLinear { x, w, b } => {
                let shape = self.nodes[x.0].value.shape();
                let (positions, din) = (shape[0] * shape[1], shape[2]);
                let dout = out.shape()[2];
                let (dx, dw, db) = kernels::positionwise_linear_backward(
                    val(*x),
                    val(*w),
                    val(*b).len(),
                    g,
                    positions,
                    din,
                    dout,
                );
                acc(*x, &dx);
                acc(*w, &dw);
                acc(*b, &db);
            }
            Op::Gate { features, weights } => {
                let c = out.shape()[2];
                let f = val(*features);
                let a = val(*weights);
                let mut df = vec![0.0; f.len()];
                let mut da = vec![0.0; a.len()];
                for (p, &ap) in a.iter().enumerate() {
                    for ch in 0..c {
                        let i = p * c + ch;
                        df[i] = g[i] * ap;
                        da[p] += g[i] * f[i];
                    }
                }
                acc(*features, &df);
                acc(*weights, &da);
            }
            Op::Stack(items) => {
                let mut offset = 0;
                for &v in items {
                    let n = val(v).len();
                    acc(v, &g[offset..offset + n]);
                    offset += n;
                }
            }
            Op::WeightedRows { weights, rows } => {
                let o = val(*weights);
                let z = val(*rows);
                let n = g.len();
                let mut d_o = vec![0.0; o.len()];
                let mut d_z = vec![0.0; z.len()];
                for (t, &ot) in o.iter().enumerate() {
                    let row = &z[t * n..][..n];
                    d_o[t] = row.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (dz, gv) in d_z[t * n..][..n].iter_mut().zip(g) {
                        *dz = ot * gv;
                    }
                }
                acc(*weights, &d_o);
                acc(*rows, &d_z);
            }
            Op::NormalizeSum(x) => {
                let total: f64 = val(*x).iter().sum();
                let dot: f64 = g.iter().zip(out.data()).map(|(a, b)| a * b).sum();
                let d: Vec<f64> = g.iter().map(|gv| (gv - dot) / total).collect();
                acc(*x, &d);
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
