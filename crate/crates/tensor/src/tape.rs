use std::borrow::Cow;

use crate::error::{Result, TensorError};
use crate::param::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logarithms.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// Stack along the channel axis, first operand first.
    Concat,
    /// Elementwise `a - b`.
    Subtract,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        cols: Vec<T>,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Sigmoid(Var),
    Linear {
        input: Var,
        weights: Var,
        bias: Var,
    },
    Concat(Var, Var),
    Subtract(Var, Var),
    SliceChannels {
        input: Var,
        start: usize,
    },
    Reshape(Var),
    Sum(Var),
    Bce {
        prediction: Var,
        label: T,
    },
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Ordered record of executed operations.
///
/// Nodes are appended as ops execute, so every node comes after the
/// producers of its inputs and the reverse of insertion order is a valid
/// backward schedule. Leaves may borrow their values (parameters, fixed
/// inputs) for the lifetime `'a`.
pub struct Tape<'a, T: Real = f32> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A fixed input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    pub fn variable_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn param(&mut self, store: &'a ParamStore<T>, id: ParamId) -> Var {
        let var = self.variable_ref(store.value(id));
        self.nodes[var.0].param = Some(id);
        var
    }

    /// Registers every parameter of `store`, in store order.
    pub fn params(&mut self, store: &'a ParamStore<T>) -> Vec<Var> {
        store.ids().map(|id| self.param(store, id)).collect()
    }

    /// 2-D cross-correlation (no kernel flip) with zero padding.
    ///
    /// `input` is `[C, H, W]`, `kernel` is `[F, C, kh, kw]`, `bias` is `[F]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        if stride == 0 {
            return Err(TensorError::usage(OP, "stride must be positive"));
        }
        let x = self.value(input);
        let k = self.value(kernel);
        let b = self.value(bias);
        if x.rank() != 3 {
            return Err(TensorError::dim(OP, "input rank", 3, x.rank()));
        }
        if k.rank() != 4 {
            return Err(TensorError::dim(OP, "kernel rank", 4, k.rank()));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (f, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kc != c {
            return Err(TensorError::dim(OP, "channels", c, kc));
        }
        if b.shape() != [f] {
            return Err(TensorError::dim(OP, "bias length", f, b.len()));
        }
        let (hp, wp) = (h + 2 * padding, w + 2 * padding);
        if kh > hp {
            return Err(TensorError::dim(OP, "height", hp, kh));
        }
        if kw > wp {
            return Err(TensorError::dim(OP, "width", wp, kw));
        }
        let ho = (hp - kh) / stride + 1;
        let wo = (wp - kw) / stride + 1;
        let l = ho * wo;
        let ckk = c * kh * kw;

        let mut cols = vec![T::zero(); ckk * l];
        let xd = x.data();
        for ci in 0..c {
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = (ci * kh + ki) * kw + kj;
                    let dst = &mut cols[row * l..(row + 1) * l];
                    for oy in 0..ho {
                        let iy = (oy * stride + ki) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &xd[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                        for ox in 0..wo {
                            let ix = (ox * stride + kj) as isize - padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[oy * wo + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }

        let mut out = vec![T::zero(); f * l];
        for (fi, &bv) in b.data().iter().enumerate() {
            out[fi * l..(fi + 1) * l].iter_mut().for_each(|o| *o = bv);
        }
        T::gemm(
            f,
            ckk,
            l,
            T::one(),
            k.data(),
            (ckk as isize, 1),
            &cols,
            (l as isize, 1),
            T::one(),
            &mut out,
            (l as isize, 1),
        );
        let value = Tensor::new(vec![f, ho, wo], out)?;
        let rg = self.grad_flag(&[input, kernel, bias]);
        Ok(self.push(
            Cow::Owned(value),
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
                cols,
            },
            rg,
        ))
    }

    /// Max over `window × window` squares. Ties resolve to the first element
    /// in row-major order, which is also where the gradient is routed.
    pub fn max_pool2d(&mut self, input: Var, window: usize, stride: usize) -> Result<Var> {
        const OP: &str = "max_pool2d";
        if window == 0 || stride == 0 {
            return Err(TensorError::usage(OP, "window and stride must be positive"));
        }
        let x = self.value(input);
        if x.rank() != 3 {
            return Err(TensorError::dim(OP, "input rank", 3, x.rank()));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if window > h {
            return Err(TensorError::dim(OP, "height", h, window));
        }
        if window > w {
            return Err(TensorError::dim(OP, "width", w, window));
        }
        let ho = (h - window) / stride + 1;
        let wo = (w - window) / stride + 1;
        let xd = x.data();
        let mut out = Vec::with_capacity(c * ho * wo);
        let mut argmax = Vec::with_capacity(c * ho * wo);
        for ci in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = (ci * h + oy * stride) * w + ox * stride;
                    for dy in 0..window {
                        let base = (ci * h + oy * stride + dy) * w + ox * stride;
                        for idx in base..base + window {
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![c, ho, wo], out)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(value), Op::MaxPool2d { input, argmax }, rg))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        match kind {
            Activation::Relu => self.relu(input),
            Activation::Sigmoid => self.sigmoid(input),
        }
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let value = self.value(input).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.grad_flag(&[input]);
        self.push(Cow::Owned(value), Op::Relu(input), rg)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let value = self.value(input).map(sigmoid);
        let rg = self.grad_flag(&[input]);
        self.push(Cow::Owned(value), Op::Sigmoid(input), rg)
    }

    /// `weights · input + bias` for `input: [N]`, `weights: [M, N]`, `bias: [M]`.
    pub fn linear(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        const OP: &str = "linear";
        let x = self.value(input);
        let wt = self.value(weights);
        let b = self.value(bias);
        if x.rank() != 1 {
            return Err(TensorError::dim(OP, "input rank", 1, x.rank()));
        }
        if wt.rank() != 2 {
            return Err(TensorError::dim(OP, "weights rank", 2, wt.rank()));
        }
        let (m, n) = (wt.shape()[0], wt.shape()[1]);
        if x.len() != n {
            return Err(TensorError::dim(OP, "inner", n, x.len()));
        }
        if b.shape() != [m] {
            return Err(TensorError::dim(OP, "bias length", m, b.len()));
        }
        let mut out = b.data().to_vec();
        T::gemm(
            m,
            n,
            1,
            T::one(),
            wt.data(),
            (n as isize, 1),
            x.data(),
            (1, 1),
            T::one(),
            &mut out,
            (1, 1),
        );
        let value = Tensor::new(vec![m], out)?;
        let rg = self.grad_flag(&[input, weights, bias]);
        Ok(self.push(Cow::Owned(value), Op::Linear { input, weights, bias }, rg))
    }

    pub fn combine(&mut self, a: Var, b: Var, mode: Combine) -> Result<Var> {
        const OP: &str = "combine";
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != vb.rank() {
            return Err(TensorError::dim(OP, "rank", va.rank(), vb.rank()));
        }
        for (axis, (&da, &db)) in va.shape().iter().zip(vb.shape()).enumerate() {
            if da != db {
                return Err(TensorError::dim(OP, format!("axis {axis}"), da, db));
            }
        }
        let rg = self.grad_flag(&[a, b]);
        match mode {
            Combine::Concat => {
                let mut shape = va.shape().to_vec();
                shape[0] *= 2;
                let mut data = Vec::with_capacity(va.len() * 2);
                data.extend_from_slice(va.data());
                data.extend_from_slice(vb.data());
                let value = Tensor::new(shape, data)?;
                Ok(self.push(Cow::Owned(value), Op::Concat(a, b), rg))
            }
            Combine::Subtract => {
                let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x - y).collect();
                let value = Tensor::new(va.shape().to_vec(), data)?;
                Ok(self.push(Cow::Owned(value), Op::Subtract(a, b), rg))
            }
        }
    }

    /// Channels `range` of a `[C, ...]` value.
    pub fn slice_channels(&mut self, input: Var, range: std::ops::Range<usize>) -> Result<Var> {
        let start = range.start;
        let value = self.value(input).slice_outer(range)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(value), Op::SliceChannels { input, start }, rg))
    }

    pub fn reshape(&mut self, input: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        let rg = self.grad_flag(&[input]);
        Ok(self.push(Cow::Owned(value), Op::Reshape(input), rg))
    }

    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        self.reshape(input, vec![n])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total: T = self.value(input).data().iter().copied().sum();
        let rg = self.grad_flag(&[input]);
        self.push(Cow::Owned(Tensor::scalar(total)), Op::Sum(input), rg)
    }

    /// Binary cross-entropy of a single probability against a 0/1 label.
    pub fn bce(&mut self, prediction: Var, label: T) -> Result<Var> {
        let p = self
            .value(prediction)
            .item()
            .ok_or_else(|| TensorError::usage("bce", "prediction must be a scalar"))?;
        let loss = bce_value(p, label);
        let rg = self.grad_flag(&[prediction]);
        Ok(self.push(Cow::Owned(Tensor::scalar(loss)), Op::Bce { prediction, label }, rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let seed = self.value(loss);
        if !seed.is_scalar() {
            return Err(TensorError::usage(
                "backward",
                format!("loss must be a scalar, got shape {:?}", seed.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(seed.shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (p, Var(i))))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, idx: usize, up: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        let ud = up.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
                cols,
            } => {
                let x = self.value(*input);
                let k = self.value(*kernel);
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (f, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
                let (ho, wo) = (node.value.shape()[1], node.value.shape()[2]);
                let l = ho * wo;
                let ckk = c * kh * kw;
                if self.needs(*bias) {
                    let db = (0..f).map(|fi| ud[fi * l..(fi + 1) * l].iter().copied().sum()).collect();
                    accumulate(grads, *bias, Tensor::new(vec![f], db).expect("bias shape"));
                }
                if self.needs(*kernel) {
                    let mut dk = vec![T::zero(); f * ckk];
                    T::gemm(
                        f,
                        l,
                        ckk,
                        T::one(),
                        ud,
                        (l as isize, 1),
                        cols,
                        (1, l as isize),
                        T::zero(),
                        &mut dk,
                        (ckk as isize, 1),
                    );
                    accumulate(grads, *kernel, Tensor::new(k.shape().to_vec(), dk).expect("kernel shape"));
                }
                if self.needs(*input) {
                    let mut dcols = vec![T::zero(); ckk * l];
                    T::gemm(
                        ckk,
                        f,
                        l,
                        T::one(),
                        k.data(),
                        (1, ckk as isize),
                        ud,
                        (l as isize, 1),
                        T::zero(),
                        &mut dcols,
                        (l as isize, 1),
                    );
                    let mut dx = vec![T::zero(); c * h * w];
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let row = (ci * kh + ki) * kw + kj;
                                let src = &dcols[row * l..(row + 1) * l];
                                for oy in 0..ho {
                                    let iy = (oy * stride + ki) as isize - *padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let base = (ci * h + iy as usize) * w;
                                    for ox in 0..wo {
                                        let ix = (ox * stride + kj) as isize - *padding as isize;
                                        if ix >= 0 && ix < w as isize {
                                            dx[base + ix as usize] += src[oy * wo + ox];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    accumulate(grads, *input, Tensor::new(vec![c, h, w], dx).expect("input shape"));
                }
            }
            Op::MaxPool2d { input, argmax } => {
                let x = self.value(*input);
                let mut dx = vec![T::zero(); x.len()];
                for (&src, &g) in argmax.iter().zip(ud) {
                    dx[src] += g;
                }
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), dx).expect("pool shape"));
            }
            Op::Relu(input) => {
                let x = self.value(*input);
                let dx = x
                    .data()
                    .iter()
                    .zip(ud)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), dx).expect("relu shape"));
            }
            Op::Sigmoid(input) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(ud)
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                accumulate(grads, *input, Tensor::new(node.value.shape().to_vec(), dx).expect("sigmoid shape"));
            }
            Op::Linear { input, weights, bias } => {
                let x = self.value(*input);
                let wt = self.value(*weights);
                let (m, n) = (wt.shape()[0], wt.shape()[1]);
                if self.needs(*bias) {
                    accumulate(grads, *bias, up.clone());
                }
                if self.needs(*weights) {
                    let xd = x.data();
                    let mut dw = Vec::with_capacity(m * n);
                    for &g in ud {
                        dw.extend(xd.iter().map(|&xv| g * xv));
                    }
                    accumulate(grads, *weights, Tensor::new(vec![m, n], dw).expect("weights shape"));
                }
                if self.needs(*input) {
                    let mut dx = vec![T::zero(); n];
                    T::gemm(
                        n,
                        m,
                        1,
                        T::one(),
                        wt.data(),
                        (1, n as isize),
                        ud,
                        (1, 1),
                        T::zero(),
                        &mut dx,
                        (1, 1),
                    );
                    accumulate(grads, *input, Tensor::new(vec![n], dx).expect("input shape"));
                }
            }
            Op::Concat(a, b) => {
                let half = ud.len() / 2;
                let shape = self.value(*a).shape().to_vec();
                if self.needs(*a) {
                    accumulate(grads, *a, Tensor::new(shape.clone(), ud[..half].to_vec()).expect("concat shape"));
                }
                if self.needs(*b) {
                    accumulate(grads, *b, Tensor::new(shape, ud[half..].to_vec()).expect("concat shape"));
                }
            }
            Op::Subtract(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, up.clone());
                }
                if self.needs(*b) {
                    accumulate(grads, *b, up.map(|g| -g));
                }
            }
            Op::SliceChannels { input, start } => {
                let x = self.value(*input);
                let inner: usize = x.shape()[1..].iter().product();
                let mut dx = vec![T::zero(); x.len()];
                dx[start * inner..start * inner + ud.len()].copy_from_slice(ud);
                accumulate(grads, *input, Tensor::new(x.shape().to_vec(), dx).expect("slice shape"));
            }
            Op::Reshape(input) => {
                let shape = self.value(*input).shape().to_vec();
                accumulate(grads, *input, Tensor::new(shape, ud.to_vec()).expect("reshape shape"));
            }
            Op::Sum(input) => {
                let shape = self.value(*input).shape().to_vec();
                accumulate(grads, *input, Tensor::full(shape, ud[0]));
            }
            Op::Bce { prediction, label } => {
                let p = self.value(*prediction).data()[0];
                let g = ud[0] * bce_derivative(p, *label);
                accumulate(grads, *prediction, Tensor::scalar(g));
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], var: Var, g: Tensor<T>) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    // Branch on sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn clamp_probability<T: Real>(p: T) -> T {
    let eps = T::of_f64(BCE_EPSILON);
    p.max(eps).min(T::one() - eps)
}

/// `−[y ln p + (1 − y) ln(1 − p)]` with `p` clamped to `[ε, 1 − ε]`.
pub fn bce_value<T: Real>(p: T, label: T) -> T {
    let p = clamp_probability(p);
    -(label * p.ln() + (T::one() - label) * (T::one() - p).ln())
}

fn bce_derivative<T: Real>(p: T, label: T) -> T {
    let eps = T::of_f64(BCE_EPSILON);
    if p < eps || p > T::one() - eps {
        return T::zero();
    }
    -label / p + (T::one() - label) / (T::one() - p)
}

/// Result of [`Tape::backward`]: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss w.r.t. `var`, or `None` when `var` does not
    /// influence the loss.
    pub fn wrt(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. `var`, zero-filled when unreachable.
    pub fn wrt_or_zero(&self, tape: &Tape<'_, T>, var: Var) -> Tensor<T> {
        self.wrt(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.shape(var).to_vec()))
    }

    /// Per-parameter gradients in store order. Parameters that were not
    /// registered on the tape, or that the loss does not depend on, get zeros.
    pub fn param_grads(&self, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        for &(id, var) in &self.params {
            if let Some(g) = self.wrt(var) {
                out[id.index()].add_assign(g);
            }
        }
        out
    }
}
