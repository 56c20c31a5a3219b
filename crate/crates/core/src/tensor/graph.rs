use super::kernels::{self, ConvGeometry};
use super::{numel_of, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded at a node, without its saved state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Exp,
    Log,
    Square,
    Sum,
    Mean,
    Reshape,
    BiasAdd,
    Conv2d,
    MaxPool2d,
    BatchNormTrain,
    BatchNormEval,
    LogSoftmax,
    Pick,
    SliceCols,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(T),
    Relu,
    Exp,
    Log,
    Square,
    Sum(Option<usize>),
    Mean(Option<usize>),
    Reshape,
    BiasAdd,
    Conv2d { stride: usize, pad: usize },
    MaxPool2d { argmax: Vec<usize> },
    BatchNormTrain { xhat: Vec<T>, inv_std: Vec<T> },
    BatchNormEval { xhat: Vec<T>, inv_std: Vec<T> },
    LogSoftmax,
    Pick(Vec<usize>),
    SliceCols { start: usize },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul => OpKind::MatMul,
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::Scale(_) => OpKind::Scale,
            Op::Relu => OpKind::Relu,
            Op::Exp => OpKind::Exp,
            Op::Log => OpKind::Log,
            Op::Square => OpKind::Square,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::Reshape => OpKind::Reshape,
            Op::BiasAdd => OpKind::BiasAdd,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::MaxPool2d { .. } => OpKind::MaxPool2d,
            Op::BatchNormTrain { .. } => OpKind::BatchNormTrain,
            Op::BatchNormEval { .. } => OpKind::BatchNormEval,
            Op::LogSoftmax => OpKind::LogSoftmax,
            Op::Pick(_) => OpKind::Pick,
            Op::SliceCols { .. } => OpKind::SliceCols,
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Per-channel statistics of a training-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub var: Vec<T>,
    /// Elements per channel that entered the statistics.
    pub count: usize,
}

/// Gradient store produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `id`; `None` for nodes that do not
    /// require gradients.
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.iter().filter(|g| g.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tape of recorded operations.
///
/// A graph is confined to one thread; build one per forward pass.
#[derive(Debug, Clone, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
}

fn channel_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::Dimension(format!(
            "expected [batch, channels, ...], got {shape:?}"
        )));
    }
    Ok((shape[0], shape[1], numel_of(&shape[2..])))
}

fn is_broadcast(a: &[usize], b: &[usize]) -> bool {
    numel_of(a) == 1 && numel_of(b) != 1
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// All node ids in recording order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId)
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Number of recorded nodes of the given kind.
    pub fn count(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Records a leaf; it is differentiable iff the tensor is flagged
    /// `requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> NodeId {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value: tensor,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> NodeId {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> NodeId {
        self.leaf(tensor.with_requires_grad(true))
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value: value.with_requires_grad(false),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul of {sa:?} and {sb:?}: inner extents must agree"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        kernels::gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMul, vec![a, b], value))
    }

    fn binary(
        &mut self,
        op: Op<T>,
        a: NodeId,
        b: NodeId,
        f: impl Fn(T, T) -> T,
    ) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        let value = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else if is_broadcast(ta.shape(), tb.shape()) {
            let x = ta.data()[0];
            let data = tb.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(tb.shape().to_vec(), data)?
        } else if is_broadcast(tb.shape(), ta.shape()) {
            let y = tb.data()[0];
            let data = ta.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else {
            return Err(Error::Dimension(format!(
                "elementwise operands {:?} and {:?} differ and neither is a scalar",
                ta.shape(),
                tb.shape()
            )));
        };
        Ok(self.push(op, vec![a, b], value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: NodeId, factor: T) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        self.push(Op::Scale(factor), vec![x], value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(Op::Relu, vec![x], value)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(T::exp);
        self.push(Op::Exp, vec![x], value)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        if let Some(bad) = self.value(x).data().iter().find(|&&v| v <= T::zero()) {
            return Err(Error::Domain(format!("log of non-positive value {bad}")));
        }
        let value = self.value(x).map(T::ln);
        Ok(self.push(Op::Log, vec![x], value))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v * v);
        self.push(Op::Square, vec![x], value)
    }

    fn reduce_axis(&self, x: NodeId, axis: usize) -> Result<(Vec<usize>, usize, usize, usize)> {
        let shape = self.value(x).shape();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        let outer = numel_of(&shape[..axis]);
        let len = shape[axis];
        let inner = numel_of(&shape[axis + 1..]);
        let mut out_shape: Vec<usize> = shape[..axis].to_vec();
        out_shape.extend_from_slice(&shape[axis + 1..]);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok((out_shape, outer, len, inner))
    }

    fn reduce(&mut self, x: NodeId, axis: Option<usize>, mean: bool) -> Result<NodeId> {
        let value = match axis {
            None => {
                let t = self.value(x);
                let mut acc = T::zero();
                for &v in t.data() {
                    acc = acc + v;
                }
                if mean {
                    acc = acc / T::of(t.numel() as f64);
                }
                Tensor::scalar(acc)
            }
            Some(axis) => {
                let (out_shape, outer, len, inner) = self.reduce_axis(x, axis)?;
                let data = self.value(x).data();
                let mut out = vec![T::zero(); outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let src = &data[(o * len + l) * inner..(o * len + l + 1) * inner];
                        let dst = &mut out[o * inner..(o + 1) * inner];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
                if mean {
                    let n = T::of(len as f64);
                    out.iter_mut().for_each(|v| *v = *v / n);
                }
                Tensor::new(out_shape, out)?
            }
        };
        let op = if mean { Op::Mean(axis) } else { Op::Sum(axis) };
        Ok(self.push(op, vec![x], value))
    }

    /// Sum over `axis`, or over all elements to a one-element tensor.
    pub fn sum(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce(x, axis, false)
    }

    pub fn mean(&mut self, x: NodeId, axis: Option<usize>) -> Result<NodeId> {
        self.reduce(x, axis, true)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(Op::Reshape, vec![x], value))
    }

    /// Adds a per-channel bias `b: [c]` to `x: [n, c, ...]`.
    pub fn bias_add(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, c, inner) = channel_layout(self.value(x).shape())?;
        let bias = self.value(b);
        if bias.shape() != [c] {
            return Err(Error::Dimension(format!(
                "bias of shape {:?} does not match {c} channels",
                bias.shape()
            )));
        }
        let bias = bias.data().to_vec();
        let src = self.value(x);
        let mut out = src.data().to_vec();
        for s in 0..n {
            for (ch, &bv) in bias.iter().enumerate() {
                let base = (s * c + ch) * inner;
                out[base..base + inner].iter_mut().for_each(|v| *v = *v + bv);
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        Ok(self.push(Op::BiasAdd, vec![x, b], value))
    }

    fn conv_geometry(
        x: &[usize],
        w: &[usize],
        stride: usize,
        pad: usize,
    ) -> Result<ConvGeometry> {
        if x.len() != 4 || w.len() != 4 || x[1] != w[1] {
            return Err(Error::Dimension(format!(
                "conv2d input {x:?} and weight {w:?} must be [n,c,h,w] and [o,c,kh,kw]"
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("conv2d stride must be positive".into()));
        }
        let (h, wd, kh, kw) = (x[2], x[3], w[2], w[3]);
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(Error::Dimension(format!(
                "conv2d kernel {kh}x{kw} larger than padded input {h}x{wd}"
            )));
        }
        Ok(ConvGeometry {
            channels: x[1],
            height: h,
            width: wd,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (wd + 2 * pad - kw) / stride + 1,
        })
    }

    /// 2-D cross-correlation of `x: [n,c,h,w]` with `w: [o,c,kh,kw]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let (xs, ws) = (self.value(x).shape().to_vec(), self.value(w).shape().to_vec());
        let g = Self::conv_geometry(&xs, &ws, stride, pad)?;
        let (n, o) = (xs[0], ws[0]);
        let (rows, cols_n) = (g.col_rows(), g.col_cols());
        let img = g.channels * g.height * g.width;
        let mut cols = vec![T::zero(); rows * cols_n];
        let mut out = vec![T::zero(); n * o * cols_n];
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        for s in 0..n {
            kernels::im2col(&xd[s * img..(s + 1) * img], &g, &mut cols);
            kernels::gemm_nn(
                wd,
                &cols,
                &mut out[s * o * cols_n..(s + 1) * o * cols_n],
                o,
                rows,
                cols_n,
            );
        }
        let value = Tensor::new(vec![n, o, g.out_h, g.out_w], out)?;
        Ok(self.push(Op::Conv2d { stride, pad }, vec![x, w], value))
    }

    /// Max pooling without padding; ties go to the lowest flat input index.
    pub fn max_pool2d(&mut self, x: NodeId, kernel: usize, stride: usize) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 4 || kernel == 0 || stride == 0 {
            return Err(Error::Dimension(format!(
                "max_pool2d expects [n,c,h,w] and positive kernel/stride, got {shape:?}"
            )));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if h < kernel || w < kernel {
            return Err(Error::Dimension(format!(
                "pool kernel {kernel} larger than input {h}x{w}"
            )));
        }
        let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(Op::MaxPool2d { argmax }, vec![x], value))
    }

    /// Training-mode batch normalization over the batch (and spatial) axes of
    /// `x: [n, c, ...]`, with scale `gamma: [c]` and shift `beta: [c]`.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<(NodeId, BatchStats<T>)> {
        let shape = self.value(x).shape().to_vec();
        let (n, c, inner) = channel_layout(&shape)?;
        if n < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batch normalization in training mode needs at least 2 samples, got {n}"
            )));
        }
        self.check_channel_param(gamma, c)?;
        self.check_channel_param(beta, c)?;
        let data = self.value(x).data();
        let count = n * inner;
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for s in 0..n {
            for (ch, m) in mean.iter_mut().enumerate() {
                let base = (s * c + ch) * inner;
                for &v in &data[base..base + inner] {
                    *m = *m + v;
                }
            }
        }
        let cnt = T::of(count as f64);
        mean.iter_mut().for_each(|m| *m = *m / cnt);
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                for &v in &data[base..base + inner] {
                    let d = v - mean[ch];
                    var[ch] = var[ch] + d * d;
                }
            }
        }
        var.iter_mut().for_each(|v| *v = *v / cnt);
        let inv_std: Vec<T> = var.iter().map(|&v| (v + T::of(eps)).sqrt().recip()).collect();
        let (out, xhat) = self.normalize(x, gamma, beta, &mean, &inv_std, &shape);
        let value = Tensor::new(shape, out)?;
        let id = self.push(
            Op::BatchNormTrain { xhat, inv_std },
            vec![x, gamma, beta],
            value,
        );
        Ok((id, BatchStats { mean, var, count }))
    }

    /// Evaluation-mode batch normalization with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[T],
        running_var: &[T],
        eps: f64,
    ) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        let (_, c, _) = channel_layout(&shape)?;
        self.check_channel_param(gamma, c)?;
        self.check_channel_param(beta, c)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::Dimension(format!(
                "running statistics of length {}/{} for {c} channels",
                running_mean.len(),
                running_var.len()
            )));
        }
        let inv_std: Vec<T> = running_var
            .iter()
            .map(|&v| (v + T::of(eps)).sqrt().recip())
            .collect();
        let (out, xhat) = self.normalize(x, gamma, beta, running_mean, &inv_std, &shape);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::BatchNormEval { xhat, inv_std },
            vec![x, gamma, beta],
            value,
        ))
    }

    fn check_channel_param(&self, p: NodeId, c: usize) -> Result<()> {
        if self.value(p).shape() != [c] {
            return Err(Error::Dimension(format!(
                "batch-norm parameter of shape {:?} for {c} channels",
                self.value(p).shape()
            )));
        }
        Ok(())
    }

    fn normalize(
        &self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        inv_std: &[T],
        shape: &[usize],
    ) -> (Vec<T>, Vec<T>) {
        let (n, c, inner) = (shape[0], shape[1], numel_of(&shape[2..]));
        let data = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); data.len()];
        let mut xhat = vec![T::zero(); data.len()];
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * inner;
                for i in base..base + inner {
                    let xh = (data[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = gd[ch] * xh + bd[ch];
                }
            }
        }
        (out, xhat)
    }

    /// Row-wise log-softmax of `x: [n, c]`, computed max-shifted.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "log_softmax expects [n, c], got {shape:?}"
            )));
        }
        let c = shape[1];
        let data = self.value(x).data();
        let mut out = vec![T::zero(); data.len()];
        for (row, dst) in data.chunks(c).zip(out.chunks_mut(c)) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for &v in row {
                z = z + (v - max).exp();
            }
            let lse = max + z.ln();
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = v - lse;
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(Op::LogSoftmax, vec![x], value))
    }

    /// Selects `x[i, indices[i]]` from `x: [n, c]`, giving `[n]`.
    pub fn pick(&mut self, x: NodeId, indices: &[usize]) -> Result<NodeId> {
        let shape = self.value(x).shape();
        if shape.len() != 2 || shape[0] != indices.len() {
            return Err(Error::Dimension(format!(
                "pick of {} indices from {shape:?}",
                indices.len()
            )));
        }
        let c = shape[1];
        if let Some(&bad) = indices.iter().find(|&&i| i >= c) {
            return Err(Error::Dimension(format!("pick index {bad} out of range 0..{c}")));
        }
        let data = self.value(x).data();
        let out = indices.iter().enumerate().map(|(r, &i)| data[r * c + i]).collect();
        let value = Tensor::new(vec![indices.len()], out)?;
        Ok(self.push(Op::Pick(indices.to_vec()), vec![x], value))
    }

    /// Columns `start..end` of `x: [n, w]`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let shape = self.value(x).shape();
        if shape.len() != 2 || start >= end || end > shape[1] {
            return Err(Error::Dimension(format!(
                "column slice {start}..{end} of {shape:?}"
            )));
        }
        let (n, w) = (shape[0], shape[1]);
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(n * (end - start));
        for r in 0..n {
            out.extend_from_slice(&data[r * w + start..r * w + end]);
        }
        let value = Tensor::new(vec![n, end - start], out)?;
        Ok(self.push(Op::SliceCols { start }, vec![x], value))
    }

    /// Reverse accumulation from a one-element `loss`.
    ///
    /// Every node that requires gradients receives one of its own shape;
    /// nodes with no path to `loss` receive zeros. Contributions from
    /// multiple consumers are summed.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            if let Some(g) = grads[id].take() {
                self.propagate(id, &g, &mut grads);
                grads[id] = Some(g);
            }
        }
        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.requires_grad.then(|| {
                    let shape = node.value.shape().to_vec();
                    let data = g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]);
                    Tensor::new(shape, data).expect("gradient shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], id: NodeId, contribution: Vec<T>) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e = *e + c;
                }
            }
            slot => *slot = Some(contribution),
        }
    }

    /// Gradient for a binary operand, folding it to one element when the
    /// operand was broadcast.
    fn fold_broadcast(&self, operand: NodeId, full: Vec<T>) -> Vec<T> {
        if self.value(operand).numel() == 1 && full.len() != 1 {
            let mut acc = T::zero();
            for v in full {
                acc = acc + v;
            }
            vec![acc]
        } else {
            full
        }
    }

    /// Elementwise value of a binary operand, repeated when broadcast.
    fn operand_at(&self, operand: NodeId, i: usize) -> T {
        let d = self.value(operand).data();
        if d.len() == 1 {
            d[0]
        } else {
            d[i]
        }
    }

    fn propagate(&self, id: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let inputs = &node.inputs;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.requires_grad(a) {
                    let mut da = vec![T::zero(); m * k];
                    kernels::gemm_nt(g, self.value(b).data(), &mut da, m, n, k);
                    self.accumulate(grads, a, da);
                }
                if self.requires_grad(b) {
                    let mut db = vec![T::zero(); k * n];
                    kernels::gemm_tn(self.value(a).data(), g, &mut db, k, m, n);
                    self.accumulate(grads, b, db);
                }
            }
            Op::Add | Op::Sub => {
                let (a, b) = (inputs[0], inputs[1]);
                let da = self.fold_broadcast(a, g.to_vec());
                self.accumulate(grads, a, da);
                let sign = if matches!(node.op, Op::Sub) {
                    -T::one()
                } else {
                    T::one()
                };
                let db = self.fold_broadcast(b, g.iter().map(|&v| v * sign).collect());
                self.accumulate(grads, b, db);
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                if self.requires_grad(a) {
                    let full = g
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * self.operand_at(b, i))
                        .collect();
                    let da = self.fold_broadcast(a, full);
                    self.accumulate(grads, a, da);
                }
                if self.requires_grad(b) {
                    let full = g
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| gv * self.operand_at(a, i))
                        .collect();
                    let db = self.fold_broadcast(b, full);
                    self.accumulate(grads, b, db);
                }
            }
            Op::Scale(c) => {
                let dx = g.iter().map(|&v| v * *c).collect();
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Relu => {
                let x = self.value(inputs[0]).data();
                let dx = g
                    .iter()
                    .zip(x)
                    .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Exp => {
                let y = node.value.data();
                let dx = g.iter().zip(y).map(|(&gv, &yv)| gv * yv).collect();
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Log => {
                let x = self.value(inputs[0]).data();
                let dx = g.iter().zip(x).map(|(&gv, &xv)| gv / xv).collect();
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Square => {
                let x = self.value(inputs[0]).data();
                let two = T::of(2.0);
                let dx = g.iter().zip(x).map(|(&gv, &xv)| gv * two * xv).collect();
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Sum(axis) | Op::Mean(axis) => {
                let x = inputs[0];
                let is_mean = matches!(node.op, Op::Mean(_));
                let dx = match axis {
                    None => {
                        let n = self.value(x).numel();
                        let v = if is_mean { g[0] / T::of(n as f64) } else { g[0] };
                        vec![v; n]
                    }
                    Some(axis) => {
                        let (_, outer, len, inner) =
                            self.reduce_axis(x, *axis).expect("validated in forward");
                        let scale = if is_mean {
                            T::of(len as f64).recip()
                        } else {
                            T::one()
                        };
                        let mut dx = vec![T::zero(); outer * len * inner];
                        for o in 0..outer {
                            for l in 0..len {
                                let dst = &mut dx[(o * len + l) * inner..(o * len + l + 1) * inner];
                                for (d, &gv) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                                    *d = gv * scale;
                                }
                            }
                        }
                        dx
                    }
                };
                self.accumulate(grads, x, dx);
            }
            Op::Reshape => self.accumulate(grads, inputs[0], g.to_vec()),
            Op::BiasAdd => {
                let (x, b) = (inputs[0], inputs[1]);
                self.accumulate(grads, x, g.to_vec());
                if self.requires_grad(b) {
                    let (n, c, inner) = channel_layout(self.value(x).shape()).expect("validated");
                    let mut db = vec![T::zero(); c];
                    for s in 0..n {
                        for (ch, d) in db.iter_mut().enumerate() {
                            let base = (s * c + ch) * inner;
                            for &gv in &g[base..base + inner] {
                                *d = *d + gv;
                            }
                        }
                    }
                    self.accumulate(grads, b, db);
                }
            }
            Op::Conv2d { stride, pad } => {
                let (x, w) = (inputs[0], inputs[1]);
                let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
                let geo = Self::conv_geometry(xs, ws, *stride, *pad).expect("validated");
                let (n, o) = (xs[0], ws[0]);
                let (rows, ncols) = (geo.col_rows(), geo.col_cols());
                let img = geo.channels * geo.height * geo.width;
                let (xd, wd) = (self.value(x).data(), self.value(w).data());
                let mut cols = vec![T::zero(); rows * ncols];
                let mut dw = vec![T::zero(); wd.len()];
                let mut dx = vec![T::zero(); xd.len()];
                let need_x = self.requires_grad(x);
                for s in 0..n {
                    let gs = &g[s * o * ncols..(s + 1) * o * ncols];
                    if self.requires_grad(w) {
                        kernels::im2col(&xd[s * img..(s + 1) * img], &geo, &mut cols);
                        kernels::gemm_nt(gs, &cols, &mut dw, o, ncols, rows);
                    }
                    if need_x {
                        cols.iter_mut().for_each(|v| *v = T::zero());
                        kernels::gemm_tn(wd, gs, &mut cols, rows, o, ncols);
                        kernels::col2im(&cols, &geo, &mut dx[s * img..(s + 1) * img]);
                    }
                }
                self.accumulate(grads, w, dw);
                self.accumulate(grads, x, dx);
            }
            Op::MaxPool2d { argmax } => {
                let x = inputs[0];
                let mut dx = vec![T::zero(); self.value(x).numel()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] = dx[src] + gv;
                }
                self.accumulate(grads, x, dx);
            }
            Op::BatchNormTrain { xhat, inv_std } => {
                let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
                let (n, c, inner) = channel_layout(self.value(x).shape()).expect("validated");
                let gd = self.value(gamma).data();
                let m = T::of((n * inner) as f64);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * inner;
                        for i in base..base + inner {
                            dgamma[ch] = dgamma[ch] + g[i] * xhat[i];
                            dbeta[ch] = dbeta[ch] + g[i];
                        }
                    }
                }
                if self.requires_grad(x) {
                    // dx = γ·σ⁻¹/m · (m·dy − Σdy − x̂·Σ(dy·x̂))
                    let mut dx = vec![T::zero(); g.len()];
                    for s in 0..n {
                        for ch in 0..c {
                            let k = gd[ch] * inv_std[ch] / m;
                            let base = (s * c + ch) * inner;
                            for i in base..base + inner {
                                dx[i] = k * (m * g[i] - dbeta[ch] - xhat[i] * dgamma[ch]);
                            }
                        }
                    }
                    self.accumulate(grads, x, dx);
                }
                self.accumulate(grads, gamma, dgamma);
                self.accumulate(grads, beta, dbeta);
            }
            Op::BatchNormEval { xhat, inv_std } => {
                let (x, gamma, beta) = (inputs[0], inputs[1], inputs[2]);
                let (n, c, inner) = channel_layout(self.value(x).shape()).expect("validated");
                let gd = self.value(gamma).data();
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut dx = vec![T::zero(); g.len()];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * inner;
                        for i in base..base + inner {
                            dgamma[ch] = dgamma[ch] + g[i] * xhat[i];
                            dbeta[ch] = dbeta[ch] + g[i];
                            dx[i] = g[i] * gd[ch] * inv_std[ch];
                        }
                    }
                }
                self.accumulate(grads, x, dx);
                self.accumulate(grads, gamma, dgamma);
                self.accumulate(grads, beta, dbeta);
            }
            Op::LogSoftmax => {
                let c = node.value.shape()[1];
                let y = node.value.data();
                let mut dx = vec![T::zero(); g.len()];
                for ((gr, yr), dr) in g.chunks(c).zip(y.chunks(c)).zip(dx.chunks_mut(c)) {
                    let mut total = T::zero();
                    for &gv in gr {
                        total = total + gv;
                    }
                    for ((d, &gv), &yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = gv - yv.exp() * total;
                    }
                }
                self.accumulate(grads, inputs[0], dx);
            }
            Op::Pick(indices) => {
                let x = inputs[0];
                let c = self.value(x).shape()[1];
                let mut dx = vec![T::zero(); self.value(x).numel()];
                for (r, (&i, &gv)) in indices.iter().zip(g).enumerate() {
                    dx[r * c + i] = gv;
                }
                self.accumulate(grads, x, dx);
            }
            Op::SliceCols { start } => {
                let x = inputs[0];
                let w = self.value(x).shape()[1];
                let width = node.value.shape()[1];
                let mut dx = vec![T::zero(); self.value(x).numel()];
                for (r, gr) in g.chunks(width).enumerate() {
                    dx[r * w + start..r * w + start + width].copy_from_slice(gr);
                }
                self.accumulate(grads, x, dx);
            }
        }
    }
}
