//! Define-by-run computation tape with reverse-mode differentiation.
//!
//! A [`Graph`] records one operation per node in execution order, which is
//! already a valid topological order; the backward pass walks the records
//! once in reverse. Graphs are rebuilt per forward pass and are
//! single-threaded by construction ([`Var`] is not `Send`).

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Elu,
    Gelu,
    Tanh,
}

impl Activation {
    fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
            Activation::Tanh => x.tanh(),
        }
    }

    fn grad(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Gelu => {
                let x2 = x * x;
                let t = (GELU_C * (x + GELU_A * x * x2)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x2)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Operation kinds recorded on the tape. Each record stores the parameters
/// needed to replay the derivative.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    // The offset is part of the record even though the derivative ignores it.
    AddScalar(#[allow(dead_code)] f64),
    MulScalar(f64),
    ClampMin(f64),
    Abs,
    Square,
    Sqrt,
    Log,
    Act(Activation),
    Matmul,
    Conv1d { stride: usize, padding: usize },
    ConvTranspose1d { stride: usize, padding: usize },
    Conv2d { stride: (usize, usize), padding: (usize, usize) },
    BiasChannel,
    BiasLast,
    LayerNorm { eps: f64 },
    Softmax,
    Lookup { ids: Vec<usize> },
    PickPerRow { cols: Vec<usize> },
    ConcatLast,
    Reshape,
    Transpose12,
    Permute0213,
    RepeatTime { time: usize },
    Frame { size: usize, hop: usize },
    GatherTime { idx: Vec<usize> },
    CropTime { len: usize },
    SelectBatch { index: usize },
    DelayAdd { delay: usize, decay: f64 },
    MeanPoolHw,
    Sum,
    Mean,
}

struct OpRecord {
    op: Op,
    inputs: Vec<usize>,
    out: usize,
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    needs_grad: bool,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<Node>,
    records: Vec<OpRecord>,
    backward_done: bool,
}

/// A reverse-mode computation tape. Cheap to clone (shared handle).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = self.inner.borrow();
        f.debug_struct("Graph")
            .field("nodes", &g.nodes.len())
            .field("records", &g.records.len())
            .finish()
    }
}

/// Handle to one tensor-valued node on a [`Graph`].
#[derive(Clone, Debug)]
pub struct Var {
    graph: Graph,
    id: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Differentiable input node.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf, vec![])
    }

    /// Non-differentiable input node (data, lookup tables, frozen values).
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf, vec![])
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    fn push(&self, value: Tensor, needs_grad: bool, op: Op, inputs: Vec<usize>) -> Var {
        let mut g = self.inner.borrow_mut();
        let id = g.nodes.len();
        debug_assert!(inputs.iter().all(|&i| i < id), "tape must stay acyclic");
        g.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
        });
        if !matches!(op, Op::Leaf) {
            g.records.push(OpRecord { op, inputs, out: id });
        }
        Var {
            graph: self.clone(),
            id,
        }
    }

    fn apply(&self, op: Op, inputs: &[&Var], value: Tensor) -> Var {
        let needs = {
            let g = self.inner.borrow();
            inputs.iter().any(|v| g.nodes[v.id].needs_grad)
        };
        self.push(value, needs, op, inputs.iter().map(|v| v.id).collect())
    }

    fn same_graph(&self, other: &Var) -> Result<()> {
        if !Rc::ptr_eq(&self.inner, &other.graph.inner) {
            return Err(Error::Dimension(
                "operands belong to different graphs".into(),
            ));
        }
        Ok(())
    }
}

impl Var {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn value(&self) -> Tensor {
        self.graph.inner.borrow().nodes[self.id].value.clone()
    }

    /// Applies `f` to the node's value without cloning it out.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.graph.inner.borrow().nodes[self.id].value)
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.graph.inner.borrow().nodes[self.id].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.id].needs_grad
    }

    /// Runs the backward pass from this scalar node, filling `grad` on every
    /// node that influences it. A second call on the same graph is rejected.
    pub fn backward(&self) -> Result<()> {
        let mut g = self.graph.inner.borrow_mut();
        if g.backward_done {
            return Err(Error::Train(
                "backward already ran on this graph; rebuild the graph before differentiating again"
                    .into(),
            ));
        }
        if g.nodes[self.id].value.numel() != 1 {
            return Err(Error::Dimension(format!(
                "backward requires a scalar output, got shape {:?}",
                g.nodes[self.id].value.shape()
            )));
        }
        g.backward_done = true;
        let seed_shape = g.nodes[self.id].value.shape().to_vec();
        g.nodes[self.id].grad = Some(Tensor::full(&seed_shape, 1.0));
        g.run_backward();
        Ok(())
    }

    fn unary(&self, op: Op, value: Tensor) -> Var {
        self.graph.apply(op, &[self], value)
    }

    fn binary(&self, other: &Var, op: Op, value: Tensor) -> Var {
        self.graph.apply(op, &[self, other], value)
    }

    fn zip_same_shape(&self, other: &Var, what: &str) -> Result<(Tensor, Tensor)> {
        self.graph.same_graph(other)?;
        let a = self.value();
        let b = other.value();
        if a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "{what}: shape {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok((a, b))
    }

    pub fn add(&self, other: &Var) -> Result<Var> {
        let (a, b) = self.zip_same_shape(other, "add")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.binary(other, Op::Add, out))
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        let (a, b) = self.zip_same_shape(other, "sub")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.binary(other, Op::Sub, out))
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        let (a, b) = self.zip_same_shape(other, "mul")?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.binary(other, Op::Mul, out))
    }

    pub fn neg(&self) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = -*x);
        self.unary(Op::Neg, v)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x += c);
        self.unary(Op::AddScalar(c), v)
    }

    pub fn mul_scalar(&self, c: f64) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x *= c);
        self.unary(Op::MulScalar(c), v)
    }

    /// Elementwise max(x, floor); the gradient is zero where clamped.
    pub fn clamp_min(&self, floor: f64) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = x.max(floor));
        self.unary(Op::ClampMin(floor), v)
    }

    pub fn abs(&self) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = x.abs());
        self.unary(Op::Abs, v)
    }

    pub fn square(&self) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = *x * *x);
        self.unary(Op::Square, v)
    }

    /// Elementwise square root; inputs must stay positive for finite gradients.
    pub fn sqrt(&self) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = x.sqrt());
        self.unary(Op::Sqrt, v)
    }

    pub fn log(&self) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = x.ln());
        self.unary(Op::Log, v)
    }

    pub fn activate(&self, kind: Activation) -> Var {
        let mut v = self.value();
        v.data_mut().iter_mut().for_each(|x| *x = kind.eval(*x));
        self.unary(Op::Act(kind), v)
    }

    /// Matrix product. Accepts `[m,k]x[k,n]`, batched `[..,m,k]x[k,n]`
    /// (shared right operand) and `[..,m,k]x[..,k,n]` with equal leading dims.
    pub fn matmul(&self, other: &Var) -> Result<Var> {
        self.graph.same_graph(other)?;
        let a = self.value();
        let b = other.value();
        let out = matmul_forward(&a, &b)?;
        Ok(self.binary(other, Op::Matmul, out))
    }

    /// 1-D convolution: `[B,Cin,T] * [Cout,Cin,K] -> [B,Cout,T_out]` with
    /// `T_out = (T + 2*padding - K)/stride + 1`.
    pub fn conv1d(&self, kernel: &Var, stride: usize, padding: usize) -> Result<Var> {
        self.graph.same_graph(kernel)?;
        let x = self.value();
        let w = kernel.value();
        let out = conv1d_forward(&x, &w, stride, padding)?;
        Ok(self.binary(kernel, Op::Conv1d { stride, padding }, out))
    }

    /// Transposed 1-D convolution: `[B,Cin,T] * [Cin,Cout,K] -> [B,Cout,T_out]`
    /// with `T_out = (T-1)*stride - 2*padding + K`.
    pub fn conv_transpose1d(&self, kernel: &Var, stride: usize, padding: usize) -> Result<Var> {
        self.graph.same_graph(kernel)?;
        let x = self.value();
        let w = kernel.value();
        let out = conv_transpose1d_forward(&x, &w, stride, padding)?;
        Ok(self.binary(kernel, Op::ConvTranspose1d { stride, padding }, out))
    }

    /// 2-D convolution: `[B,Cin,H,W] * [Cout,Cin,KH,KW] -> [B,Cout,H',W']`.
    pub fn conv2d(
        &self,
        kernel: &Var,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var> {
        self.graph.same_graph(kernel)?;
        let x = self.value();
        let w = kernel.value();
        let out = conv2d_forward(&x, &w, stride, padding)?;
        Ok(self.binary(kernel, Op::Conv2d { stride, padding }, out))
    }

    /// Adds a `[C]` bias across the channel axis of a `[B,C,..]` tensor.
    pub fn bias_channel(&self, bias: &Var) -> Result<Var> {
        self.graph.same_graph(bias)?;
        let x = self.value();
        let b = bias.value();
        if x.rank() < 2 || b.rank() != 1 || x.shape()[1] != b.shape()[0] {
            return Err(Error::Dimension(format!(
                "bias_channel: input {:?} vs bias {:?}",
                x.shape(),
                b.shape()
            )));
        }
        let channels = x.shape()[1];
        let inner: usize = x.shape()[2..].iter().product();
        let mut out = x.clone();
        let data = out.data_mut();
        let batch = x.shape()[0];
        for bi in 0..batch {
            for c in 0..channels {
                let base = (bi * channels + c) * inner;
                let add = b.data()[c];
                for v in &mut data[base..base + inner] {
                    *v += add;
                }
            }
        }
        Ok(self.binary(bias, Op::BiasChannel, out))
    }

    /// Adds a `[D]` bias across the last axis.
    pub fn bias_last(&self, bias: &Var) -> Result<Var> {
        self.graph.same_graph(bias)?;
        let x = self.value();
        let b = bias.value();
        let d = *x.shape().last().unwrap();
        if b.rank() != 1 || b.shape()[0] != d {
            return Err(Error::Dimension(format!(
                "bias_last: input {:?} vs bias {:?}",
                x.shape(),
                b.shape()
            )));
        }
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % d];
        }
        Ok(self.binary(bias, Op::BiasLast, out))
    }

    /// Layer normalization over the last axis, then affine gain/bias.
    pub fn layer_norm(&self, gain: &Var, bias: &Var, eps: f64) -> Result<Var> {
        self.graph.same_graph(gain)?;
        self.graph.same_graph(bias)?;
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let x = self.value();
        let d = *x.shape().last().unwrap();
        if gain.value().shape() != [d] || bias.value().shape() != [d] {
            return Err(Error::Dimension(format!(
                "layer_norm: input {:?} needs gain/bias of shape [{d}], got {:?}/{:?}",
                x.shape(),
                gain.value().shape(),
                bias.value().shape()
            )));
        }
        let out = layer_norm_forward(&x, &gain.value(), &bias.value(), eps);
        let needs = {
            let g = self.graph.inner.borrow();
            [self.id, gain.id, bias.id]
                .iter()
                .any(|&i| g.nodes[i].needs_grad)
        };
        Ok(self.graph.push(
            out,
            needs,
            Op::LayerNorm { eps },
            vec![self.id, gain.id, bias.id],
        ))
    }

    /// Softmax over the last axis with max subtraction for overflow safety.
    pub fn softmax(&self) -> Var {
        let x = self.value();
        let d = *x.shape().last().unwrap();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.unary(Op::Softmax, out)
    }

    /// Row lookup: `table[V,E]` gathered at `ids` -> `[ids.len(),E]`.
    /// The backward pass scatters gradients into the table rows.
    pub fn lookup(&self, ids: &[usize]) -> Result<Var> {
        let t = self.value();
        if t.rank() != 2 {
            return Err(Error::Dimension(format!(
                "lookup table must be 2-D, got {:?}",
                t.shape()
            )));
        }
        let (v, e) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Dimension(format!(
                "lookup id {bad} out of range for table with {v} rows"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            data.extend_from_slice(&t.data()[i * e..(i + 1) * e]);
        }
        let out = Tensor::new(vec![ids.len(), e], data)?;
        Ok(self.unary(Op::Lookup { ids: ids.to_vec() }, out))
    }

    /// Picks one element per row of a `[R,C]` tensor -> `[R]`.
    pub fn pick_per_row(&self, cols: &[usize]) -> Result<Var> {
        let t = self.value();
        if t.rank() != 2 || t.shape()[0] != cols.len() {
            return Err(Error::Dimension(format!(
                "pick_per_row: tensor {:?} vs {} picks",
                t.shape(),
                cols.len()
            )));
        }
        let c = t.shape()[1];
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::Dimension(format!(
                "pick_per_row column {bad} out of range ({c} columns)"
            )));
        }
        let data: Vec<f64> = cols
            .iter()
            .enumerate()
            .map(|(r, &j)| t.data()[r * c + j])
            .collect();
        let out = Tensor::new(vec![cols.len()], data)?;
        Ok(self.unary(Op::PickPerRow { cols: cols.to_vec() }, out))
    }

    /// Concatenates along the last axis; all leading dims must agree.
    pub fn concat_last(parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat_last of zero tensors".into()))?;
        let graph = first.graph.clone();
        let lead: Vec<usize> = {
            let s = first.shape();
            s[..s.len() - 1].to_vec()
        };
        let mut width = 0usize;
        for p in parts {
            graph.same_graph(p)?;
            let s = p.shape();
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::Dimension(format!(
                    "concat_last: leading dims {:?} vs {:?}",
                    &s[..s.len() - 1],
                    lead
                )));
            }
            width += *s.last().unwrap();
        }
        let rows: usize = lead.iter().product();
        let mut data = vec![0.0; rows * width];
        let mut offset = 0usize;
        for p in parts {
            let v = p.value();
            let w = *v.shape().last().unwrap();
            for r in 0..rows {
                data[r * width + offset..r * width + offset + w]
                    .copy_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead;
        shape.push(width);
        let out = Tensor::new(shape, data)?;
        let refs: Vec<&Var> = parts.iter().collect();
        Ok(graph.apply(Op::ConcatLast, &refs, out))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let out = self.value().reshape(shape)?;
        Ok(self.unary(Op::Reshape, out))
    }

    /// `[B,T,D] -> [B,D,T]`.
    pub fn transpose12(&self) -> Result<Var> {
        let x = self.value();
        if x.rank() != 3 {
            return Err(Error::Dimension(format!(
                "transpose12 needs a 3-D tensor, got {:?}",
                x.shape()
            )));
        }
        Ok(self.unary(Op::Transpose12, transpose12(&x)))
    }

    /// `[B,T,H,E] -> [B,H,T,E]`.
    pub fn permute0213(&self) -> Result<Var> {
        let x = self.value();
        if x.rank() != 4 {
            return Err(Error::Dimension(format!(
                "permute0213 needs a 4-D tensor, got {:?}",
                x.shape()
            )));
        }
        Ok(self.unary(Op::Permute0213, permute0213(&x)))
    }

    /// Broadcasts a single-frame `[B,1,D]` feature to `[B,time,D]`.
    pub fn repeat_time(&self, time: usize) -> Result<Var> {
        let x = self.value();
        if x.rank() != 3 || x.shape()[1] != 1 {
            return Err(Error::Dimension(format!(
                "repeat_time needs [B,1,D], got {:?}",
                x.shape()
            )));
        }
        let (b, d) = (x.shape()[0], x.shape()[2]);
        let mut data = Vec::with_capacity(b * time * d);
        for bi in 0..b {
            let row = &x.data()[bi * d..(bi + 1) * d];
            for _ in 0..time {
                data.extend_from_slice(row);
            }
        }
        let out = Tensor::new(vec![b, time, d], data)?;
        Ok(self.unary(Op::RepeatTime { time }, out))
    }

    /// Splits a `[B,L]` waveform into reflect-padded overlapping frames
    /// `[B,F,size]` with hop `hop`; `F = (L + 2*(size/2) - size)/hop + 1`.
    pub fn frames(&self, size: usize, hop: usize) -> Result<Var> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::Dimension(format!(
                "frames needs [B,L], got {:?}",
                x.shape()
            )));
        }
        let len = x.shape()[1];
        let pad = size / 2;
        if hop == 0 || size == 0 {
            return Err(Error::Config("frames: size and hop must be positive".into()));
        }
        if len < pad + 1 {
            return Err(Error::Dimension(format!(
                "clip of {len} samples is shorter than one frame (size {size})"
            )));
        }
        let b = x.shape()[0];
        let n_frames = (len + 2 * pad - size) / hop + 1;
        let mut data = Vec::with_capacity(b * n_frames * size);
        for bi in 0..b {
            let row = &x.data()[bi * len..(bi + 1) * len];
            for f in 0..n_frames {
                for j in 0..size {
                    data.push(row[reflect_index(f * hop + j, pad, len)]);
                }
            }
        }
        let out = Tensor::new(vec![b, n_frames, size], data)?;
        Ok(self.unary(Op::Frame { size, hop }, out))
    }

    /// Gathers waveform samples at fixed positions: `[B,L] -> [B,idx.len()]`.
    pub fn gather_time(&self, idx: &[usize]) -> Result<Var> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::Dimension(format!(
                "gather_time needs [B,L], got {:?}",
                x.shape()
            )));
        }
        let len = x.shape()[1];
        if let Some(&bad) = idx.iter().find(|&&i| i >= len) {
            return Err(Error::Dimension(format!(
                "gather_time index {bad} out of range for length {len}"
            )));
        }
        let b = x.shape()[0];
        let mut data = Vec::with_capacity(b * idx.len());
        for bi in 0..b {
            let row = &x.data()[bi * len..(bi + 1) * len];
            data.extend(idx.iter().map(|&i| row[i]));
        }
        let out = Tensor::new(vec![b, idx.len()], data)?;
        Ok(self.unary(Op::GatherTime { idx: idx.to_vec() }, out))
    }

    /// Keeps the first `len` samples of a `[B,L]` waveform.
    pub fn crop_time(&self, len: usize) -> Result<Var> {
        let x = self.value();
        if x.rank() != 2 || x.shape()[1] < len {
            return Err(Error::Dimension(format!(
                "crop_time to {len} on {:?}",
                x.shape()
            )));
        }
        let (b, full) = (x.shape()[0], x.shape()[1]);
        let mut data = Vec::with_capacity(b * len);
        for bi in 0..b {
            data.extend_from_slice(&x.data()[bi * full..bi * full + len]);
        }
        let out = Tensor::new(vec![b, len], data)?;
        Ok(self.unary(Op::CropTime { len }, out))
    }

    /// Extracts one batch item: `[B, ..] -> [1, ..]`.
    pub fn select_batch(&self, index: usize) -> Result<Var> {
        let x = self.value();
        if x.rank() < 2 || index >= x.shape()[0] {
            return Err(Error::Dimension(format!(
                "select_batch({index}) on {:?}",
                x.shape()
            )));
        }
        let rest: usize = x.shape()[1..].iter().product();
        let mut shape = x.shape().to_vec();
        shape[0] = 1;
        let data = x.data()[index * rest..(index + 1) * rest].to_vec();
        let out = Tensor::new(shape, data)?;
        Ok(self.unary(Op::SelectBatch { index }, out))
    }

    /// Echo tap: `y[n] = x[n] + decay * x[n - delay]` on `[B,L]`.
    pub fn delay_add(&self, delay: usize, decay: f64) -> Result<Var> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::Dimension(format!(
                "delay_add needs [B,L], got {:?}",
                x.shape()
            )));
        }
        let (b, len) = (x.shape()[0], x.shape()[1]);
        if delay >= len {
            return Err(Error::Config(format!(
                "delay {delay} not below clip length {len}"
            )));
        }
        let mut out = x.clone();
        let data = out.data_mut();
        for bi in 0..b {
            let base = bi * len;
            for n in (delay..len).rev() {
                data[base + n] += decay * data[base + n - delay];
            }
        }
        Ok(self.unary(Op::DelayAdd { delay, decay }, out))
    }

    /// Global average pool over the two trailing axes: `[B,C,H,W] -> [B,C]`.
    pub fn mean_pool_hw(&self) -> Result<Var> {
        let x = self.value();
        if x.rank() != 4 {
            return Err(Error::Dimension(format!(
                "mean_pool_hw needs [B,C,H,W], got {:?}",
                x.shape()
            )));
        }
        let (b, c, h, w) = shape4(&x);
        let inner = h * w;
        let mut data = Vec::with_capacity(b * c);
        for bc in 0..b * c {
            let s: f64 = x.data()[bc * inner..(bc + 1) * inner].iter().sum();
            data.push(s / inner as f64);
        }
        let out = Tensor::new(vec![b, c], data)?;
        Ok(self.unary(Op::MeanPoolHw, out))
    }

    /// Sum of all elements -> `[1]`.
    pub fn sum(&self) -> Var {
        let s: f64 = self.with_value(|t| t.data().iter().sum());
        self.unary(Op::Sum, Tensor::scalar(s))
    }

    /// Mean of all elements -> `[1]`.
    pub fn mean(&self) -> Var {
        let (s, n) = self.with_value(|t| (t.data().iter().sum::<f64>(), t.numel()));
        self.unary(Op::Mean, Tensor::scalar(s / n as f64))
    }
}

// ── shape helpers ───────────────────────────────────────────────────────────

fn shape3(t: &Tensor) -> (usize, usize, usize) {
    (t.shape()[0], t.shape()[1], t.shape()[2])
}

fn shape4(t: &Tensor) -> (usize, usize, usize, usize) {
    (t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3])
}

/// Maps a padded-signal index back into the source via reflection
/// (`pad` samples mirrored on each side, excluding the edge sample).
fn reflect_index(padded: usize, pad: usize, len: usize) -> usize {
    let i = padded as isize - pad as isize;
    if i < 0 {
        (-i) as usize
    } else if i as usize >= len {
        2 * len - 2 - i as usize
    } else {
        i as usize
    }
}

fn transpose12(x: &Tensor) -> Tensor {
    let (b, t, d) = shape3(x);
    let mut out = Tensor::zeros(&[b, d, t]);
    let dst = out.data_mut();
    for bi in 0..b {
        for ti in 0..t {
            for di in 0..d {
                dst[(bi * d + di) * t + ti] = x.data()[(bi * t + ti) * d + di];
            }
        }
    }
    out
}

fn permute0213(x: &Tensor) -> Tensor {
    let (b, t, h, e) = shape4(x);
    let mut out = Tensor::zeros(&[b, h, t, e]);
    let dst = out.data_mut();
    for bi in 0..b {
        for ti in 0..t {
            for hi in 0..h {
                let src = ((bi * t + ti) * h + hi) * e;
                let to = ((bi * h + hi) * t + ti) * e;
                dst[to..to + e].copy_from_slice(&x.data()[src..src + e]);
            }
        }
    }
    out
}

// ── matmul ──────────────────────────────────────────────────────────────────

/// `c[m,n] += a[m,k] * b[k,n]`
fn mm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
}

/// `c[m,n] += a[m,k] * b[n,k]^T`
fn mm_abt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            c[i * n + j] += s;
        }
    }
}

/// `c[k,n] += a[m,k]^T * g[m,n]`
fn mm_atb_acc(a: &[f64], g: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * grow[j];
            }
        }
    }
}

/// Dimensions of a matmul after normalizing to batched 3-D form.
struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_rhs: bool,
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<MatmulDims> {
    let ar = a.rank();
    let br = b.rank();
    if ar < 2 || br < 2 {
        return Err(Error::Dimension(format!(
            "matmul needs rank >= 2 operands, got {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[ar - 2], a.shape()[ar - 1]);
    let (kb, n) = (b.shape()[br - 2], b.shape()[br - 1]);
    if k != kb {
        return Err(Error::Dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let batch: usize = a.shape()[..ar - 2].iter().product();
    if br == 2 {
        return Ok(MatmulDims {
            batch,
            m,
            k,
            n,
            shared_rhs: true,
        });
    }
    if a.shape()[..ar - 2] != b.shape()[..br - 2] {
        return Err(Error::Dimension(format!(
            "matmul batch dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(MatmulDims {
        batch,
        m,
        k,
        n,
        shared_rhs: false,
    })
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = matmul_dims(a, b)?;
    let mut shape = a.shape()[..a.rank() - 2].to_vec();
    shape.push(d.m);
    shape.push(d.n);
    let mut out = Tensor::zeros(&shape);
    let dst = out.data_mut();
    for bi in 0..d.batch {
        let asl = &a.data()[bi * d.m * d.k..(bi + 1) * d.m * d.k];
        let bsl = if d.shared_rhs {
            b.data()
        } else {
            &b.data()[bi * d.k * d.n..(bi + 1) * d.k * d.n]
        };
        mm_acc(asl, bsl, &mut dst[bi * d.m * d.n..(bi + 1) * d.m * d.n], d.m, d.k, d.n);
    }
    Ok(out)
}

// ── convolutions ────────────────────────────────────────────────────────────

fn conv1d_out_len(t: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if k > t + 2 * padding {
        return Err(Error::Dimension(format!(
            "kernel of {k} taps longer than padded input ({t} + 2*{padding})"
        )));
    }
    Ok((t + 2 * padding - k) / stride + 1)
}

/// Output positions `tau` for which `tau*stride + tap - padding` lands
/// inside `0..t_in`, clipped to `0..t_out`.
fn conv_tap_range(
    tap: usize,
    padding: usize,
    stride: usize,
    t_in: usize,
    t_out: usize,
) -> (usize, usize) {
    let lo = if padding > tap {
        (padding - tap).div_ceil(stride)
    } else {
        0
    };
    let hi = if t_in + padding > tap {
        ((t_in + padding - tap - 1) / stride + 1).min(t_out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn conv1d_forward(x: &Tensor, w: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 3 || x.shape()[1] != w.shape()[1] {
        return Err(Error::Dimension(format!(
            "conv1d: input {:?} vs kernel {:?} (channel counts must agree)",
            x.shape(),
            w.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("conv1d stride must be >= 1".into()));
    }
    let (b, cin, t) = shape3(x);
    let (cout, _, k) = shape3(w);
    let t_out = conv1d_out_len(t, k, stride, padding)?;
    let mut out = Tensor::zeros(&[b, cout, t_out]);
    let dst = out.data_mut();
    for bi in 0..b {
        for co in 0..cout {
            let orow = &mut dst[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
            for ci in 0..cin {
                let xrow = &x.data()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                let wrow = &w.data()[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = conv_tap_range(kk, padding, stride, t, t_out);
                    if stride == 1 {
                        let base = lo + kk - padding;
                        for (o, &xv) in orow[lo..hi].iter_mut().zip(&xrow[base..base + hi - lo]) {
                            *o += wv * xv;
                        }
                    } else {
                        for tau in lo..hi {
                            orow[tau] += wv * xrow[tau * stride + kk - padding];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv_transpose1d_forward(
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    if x.rank() != 3 || w.rank() != 3 || x.shape()[1] != w.shape()[0] {
        return Err(Error::Dimension(format!(
            "conv_transpose1d: input {:?} vs kernel {:?} (input channels must match kernel dim 0)",
            x.shape(),
            w.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("conv_transpose1d stride must be >= 1".into()));
    }
    let (b, cin, t) = shape3(x);
    let (_, cout, k) = shape3(w);
    let full = (t - 1) * stride + k;
    if full < 2 * padding + 1 {
        return Err(Error::Dimension(format!(
            "conv_transpose1d output would be empty: (T-1)*{stride}+{k} <= 2*{padding}"
        )));
    }
    let t_out = full - 2 * padding;
    let mut out = Tensor::zeros(&[b, cout, t_out]);
    let dst = out.data_mut();
    for bi in 0..b {
        for ci in 0..cin {
            let xrow = &x.data()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
            for co in 0..cout {
                let wrow = &w.data()[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                let orow = &mut dst[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                for (kk, &wv) in wrow.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    let (lo, hi) = conv_tap_range(kk, padding, stride, t_out, t);
                    for ti in lo..hi {
                        orow[ti * stride + kk - padding] += wv * xrow[ti];
                    }
                }
            }
        }
    }
    Ok(out)
}

fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    stride: (usize, usize),
    padding: (usize, usize),
) -> Result<Tensor> {
    if x.rank() != 4 || w.rank() != 4 || x.shape()[1] != w.shape()[1] {
        return Err(Error::Dimension(format!(
            "conv2d: input {:?} vs kernel {:?} (channel counts must agree)",
            x.shape(),
            w.shape()
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::Config("conv2d strides must be >= 1".into()));
    }
    let (b, cin, h, wd) = shape4(x);
    let (cout, _, kh, kw) = shape4(w);
    let h_out = conv1d_out_len(h, kh, stride.0, padding.0)?;
    let w_out = conv1d_out_len(wd, kw, stride.1, padding.1)?;
    let mut out = Tensor::zeros(&[b, cout, h_out, w_out]);
    let dst = out.data_mut();
    for bi in 0..b {
        for co in 0..cout {
            let obase = (bi * cout + co) * h_out * w_out;
            for ci in 0..cin {
                let xbase = (bi * cin + ci) * h * wd;
                let wbase = (co * cin + ci) * kh * kw;
                for kyy in 0..kh {
                    let (oy_lo, oy_hi) = conv_tap_range(kyy, padding.0, stride.0, h, h_out);
                    for kxx in 0..kw {
                        let wv = w.data()[wbase + kyy * kw + kxx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox_lo, ox_hi) = conv_tap_range(kxx, padding.1, stride.1, wd, w_out);
                        for oy in oy_lo..oy_hi {
                            let xrow = xbase + (oy * stride.0 + kyy - padding.0) * wd;
                            let orow = obase + oy * w_out;
                            if stride.1 == 1 {
                                let xoff = xrow + ox_lo + kxx - padding.1;
                                for (o, &xv) in dst[orow + ox_lo..orow + ox_hi]
                                    .iter_mut()
                                    .zip(&x.data()[xoff..xoff + ox_hi - ox_lo])
                                {
                                    *o += wv * xv;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    dst[orow + ox] +=
                                        wv * x.data()[xrow + ox * stride.1 + kxx - padding.1];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

// ── layer norm ──────────────────────────────────────────────────────────────

fn layer_norm_forward(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Tensor {
    let d = *x.shape().last().unwrap();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gain.data()[j] + bias.data()[j];
        }
    }
    out
}

// ── backward pass ───────────────────────────────────────────────────────────

impl GraphInner {
    fn grad_buf(&mut self, id: usize) -> &mut Tensor {
        if self.nodes[id].grad.is_none() {
            let shape = self.nodes[id].value.shape().to_vec();
            self.nodes[id].grad = Some(Tensor::zeros(&shape));
        }
        self.nodes[id].grad.as_mut().unwrap()
    }

    fn run_backward(&mut self) {
        for ri in (0..self.records.len()).rev() {
            // Split borrows: take the output grad out, restore it afterwards.
            let out_id = self.records[ri].out;
            let Some(go) = self.nodes[out_id].grad.take() else {
                continue;
            };
            let rec_inputs = self.records[ri].inputs.clone();
            let op = self.records[ri].op.clone();
            self.step_backward(&op, &rec_inputs, out_id, &go);
            self.nodes[out_id].grad = Some(go);
        }
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    fn step_backward(&mut self, op: &Op, inputs: &[usize], out_id: usize, go: &Tensor) {
        match op {
            Op::Leaf => {}
            Op::Add => {
                for &i in &inputs[..2] {
                    if self.needs(i) {
                        let g = self.grad_buf(i);
                        for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                            *gv += ov;
                        }
                    }
                }
            }
            Op::Sub => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += ov;
                    }
                }
                if self.needs(inputs[1]) {
                    let g = self.grad_buf(inputs[1]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv -= ov;
                    }
                }
            }
            Op::Mul => {
                let a = self.nodes[inputs[0]].value.clone();
                let b = self.nodes[inputs[1]].value.clone();
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &bv) in g.data_mut().iter_mut().zip(go.data()).zip(b.data()) {
                        *gv += ov * bv;
                    }
                }
                if self.needs(inputs[1]) {
                    let g = self.grad_buf(inputs[1]);
                    for ((gv, &ov), &av) in g.data_mut().iter_mut().zip(go.data()).zip(a.data()) {
                        *gv += ov * av;
                    }
                }
            }
            Op::Neg => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv -= ov;
                    }
                }
            }
            Op::AddScalar(_) => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += ov;
                    }
                }
            }
            Op::MulScalar(c) => {
                if self.needs(inputs[0]) {
                    let c = *c;
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += c * ov;
                    }
                }
            }
            Op::ClampMin(floor) => {
                if self.needs(inputs[0]) {
                    let x = self.nodes[inputs[0]].value.clone();
                    let floor = *floor;
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &xv) in g.data_mut().iter_mut().zip(go.data()).zip(x.data()) {
                        if xv > floor {
                            *gv += ov;
                        }
                    }
                }
            }
            Op::Abs => {
                if self.needs(inputs[0]) {
                    let x = self.nodes[inputs[0]].value.clone();
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &xv) in g.data_mut().iter_mut().zip(go.data()).zip(x.data()) {
                        *gv += ov * xv.signum();
                    }
                }
            }
            Op::Square => {
                if self.needs(inputs[0]) {
                    let x = self.nodes[inputs[0]].value.clone();
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &xv) in g.data_mut().iter_mut().zip(go.data()).zip(x.data()) {
                        *gv += 2.0 * xv * ov;
                    }
                }
            }
            Op::Sqrt => {
                if self.needs(inputs[0]) {
                    let y = self.nodes[out_id].value.clone();
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &yv) in g.data_mut().iter_mut().zip(go.data()).zip(y.data()) {
                        *gv += ov / (2.0 * yv);
                    }
                }
            }
            Op::Log => {
                if self.needs(inputs[0]) {
                    let x = self.nodes[inputs[0]].value.clone();
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &xv) in g.data_mut().iter_mut().zip(go.data()).zip(x.data()) {
                        *gv += ov / xv;
                    }
                }
            }
            Op::Act(kind) => {
                if self.needs(inputs[0]) {
                    let x = self.nodes[inputs[0]].value.clone();
                    let kind = *kind;
                    let g = self.grad_buf(inputs[0]);
                    for ((gv, &ov), &xv) in g.data_mut().iter_mut().zip(go.data()).zip(x.data()) {
                        *gv += ov * kind.grad(xv);
                    }
                }
            }
            Op::Matmul => self.backward_matmul(inputs, go),
            Op::Conv1d { stride, padding } => self.backward_conv1d(inputs, go, *stride, *padding),
            Op::ConvTranspose1d { stride, padding } => {
                self.backward_conv_transpose1d(inputs, go, *stride, *padding)
            }
            Op::Conv2d { stride, padding } => self.backward_conv2d(inputs, go, *stride, *padding),
            Op::BiasChannel => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += ov;
                    }
                }
                if self.needs(inputs[1]) {
                    let xshape = self.nodes[inputs[0]].value.shape().to_vec();
                    let channels = xshape[1];
                    let inner: usize = xshape[2..].iter().product();
                    let batch = xshape[0];
                    let g = self.grad_buf(inputs[1]);
                    for bi in 0..batch {
                        for c in 0..channels {
                            let base = (bi * channels + c) * inner;
                            g.data_mut()[c] += go.data()[base..base + inner].iter().sum::<f64>();
                        }
                    }
                }
            }
            Op::BiasLast => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += ov;
                    }
                }
                if self.needs(inputs[1]) {
                    let d = self.nodes[inputs[1]].value.numel();
                    let g = self.grad_buf(inputs[1]);
                    for (i, &ov) in go.data().iter().enumerate() {
                        g.data_mut()[i % d] += ov;
                    }
                }
            }
            Op::LayerNorm { eps } => self.backward_layer_norm(inputs, go, *eps),
            Op::Softmax => {
                if self.needs(inputs[0]) {
                    let y = self.nodes[out_id].value.clone();
                    let d = *y.shape().last().unwrap();
                    let g = self.grad_buf(inputs[0]);
                    for (row, (yrow, orow)) in g
                        .data_mut()
                        .chunks_mut(d)
                        .zip(y.data().chunks(d).zip(go.data().chunks(d)))
                    {
                        let dot: f64 = yrow.iter().zip(orow).map(|(&yv, &ov)| yv * ov).sum();
                        for ((gv, &yv), &ov) in row.iter_mut().zip(yrow).zip(orow) {
                            *gv += yv * (ov - dot);
                        }
                    }
                }
            }
            Op::Lookup { ids } => {
                if self.needs(inputs[0]) {
                    let e = self.nodes[inputs[0]].value.shape()[1];
                    let ids = ids.clone();
                    let g = self.grad_buf(inputs[0]);
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &go.data()[r * e..(r + 1) * e];
                        let dst = &mut g.data_mut()[id * e..(id + 1) * e];
                        for (dv, &sv) in dst.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                }
            }
            Op::PickPerRow { cols } => {
                if self.needs(inputs[0]) {
                    let c = self.nodes[inputs[0]].value.shape()[1];
                    let cols = cols.clone();
                    let g = self.grad_buf(inputs[0]);
                    for (r, &j) in cols.iter().enumerate() {
                        g.data_mut()[r * c + j] += go.data()[r];
                    }
                }
            }
            Op::ConcatLast => {
                let widths: Vec<usize> = inputs
                    .iter()
                    .map(|&i| *self.nodes[i].value.shape().last().unwrap())
                    .collect();
                let total: usize = widths.iter().sum();
                let rows = go.numel() / total;
                let mut offset = 0usize;
                for (&inp, &w) in inputs.iter().zip(&widths) {
                    if self.needs(inp) {
                        let g = self.grad_buf(inp);
                        for r in 0..rows {
                            let src = &go.data()[r * total + offset..r * total + offset + w];
                            let dst = &mut g.data_mut()[r * w..(r + 1) * w];
                            for (dv, &sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Reshape => {
                if self.needs(inputs[0]) {
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(go.data()) {
                        *gv += ov;
                    }
                }
            }
            Op::Transpose12 => {
                if self.needs(inputs[0]) {
                    let back = transpose12(go);
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(back.data()) {
                        *gv += ov;
                    }
                }
            }
            Op::Permute0213 => {
                if self.needs(inputs[0]) {
                    let back = permute0213(go); // the permutation is its own inverse
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut().iter_mut().zip(back.data()) {
                        *gv += ov;
                    }
                }
            }
            Op::RepeatTime { time } => {
                if self.needs(inputs[0]) {
                    let d = self.nodes[inputs[0]].value.shape()[2];
                    let b = self.nodes[inputs[0]].value.shape()[0];
                    let time = *time;
                    let g = self.grad_buf(inputs[0]);
                    for bi in 0..b {
                        for ti in 0..time {
                            let src = &go.data()[(bi * time + ti) * d..(bi * time + ti + 1) * d];
                            let dst = &mut g.data_mut()[bi * d..(bi + 1) * d];
                            for (dv, &sv) in dst.iter_mut().zip(src) {
                                *dv += sv;
                            }
                        }
                    }
                }
            }
            Op::Frame { size, hop } => {
                if self.needs(inputs[0]) {
                    let len = self.nodes[inputs[0]].value.shape()[1];
                    let b = self.nodes[inputs[0]].value.shape()[0];
                    let (size, hop) = (*size, *hop);
                    let pad = size / 2;
                    let n_frames = (len + 2 * pad - size) / hop + 1;
                    let g = self.grad_buf(inputs[0]);
                    for bi in 0..b {
                        for f in 0..n_frames {
                            for j in 0..size {
                                let src = reflect_index(f * hop + j, pad, len);
                                g.data_mut()[bi * len + src] +=
                                    go.data()[(bi * n_frames + f) * size + j];
                            }
                        }
                    }
                }
            }
            Op::GatherTime { idx } => {
                if self.needs(inputs[0]) {
                    let len = self.nodes[inputs[0]].value.shape()[1];
                    let b = self.nodes[inputs[0]].value.shape()[0];
                    let idx = idx.clone();
                    let g = self.grad_buf(inputs[0]);
                    for bi in 0..b {
                        for (j, &i) in idx.iter().enumerate() {
                            g.data_mut()[bi * len + i] += go.data()[bi * idx.len() + j];
                        }
                    }
                }
            }
            Op::CropTime { len } => {
                if self.needs(inputs[0]) {
                    let full = self.nodes[inputs[0]].value.shape()[1];
                    let b = self.nodes[inputs[0]].value.shape()[0];
                    let len = *len;
                    let g = self.grad_buf(inputs[0]);
                    for bi in 0..b {
                        for j in 0..len {
                            g.data_mut()[bi * full + j] += go.data()[bi * len + j];
                        }
                    }
                }
            }
            Op::SelectBatch { index } => {
                if self.needs(inputs[0]) {
                    let rest: usize = self.nodes[inputs[0]].value.shape()[1..].iter().product();
                    let index = *index;
                    let g = self.grad_buf(inputs[0]);
                    for (gv, &ov) in g.data_mut()[index * rest..(index + 1) * rest]
                        .iter_mut()
                        .zip(go.data())
                    {
                        *gv += ov;
                    }
                }
            }
            Op::DelayAdd { delay, decay } => {
                if self.needs(inputs[0]) {
                    let len = self.nodes[inputs[0]].value.shape()[1];
                    let b = self.nodes[inputs[0]].value.shape()[0];
                    let (delay, decay) = (*delay, *decay);
                    let g = self.grad_buf(inputs[0]);
                    for bi in 0..b {
                        let base = bi * len;
                        for n in 0..len {
                            let mut s = go.data()[base + n];
                            if n + delay < len {
                                s += decay * go.data()[base + n + delay];
                            }
                            g.data_mut()[base + n] += s;
                        }
                    }
                }
            }
            Op::MeanPoolHw => {
                if self.needs(inputs[0]) {
                    let shape = self.nodes[inputs[0]].value.shape().to_vec();
                    let inner = shape[2] * shape[3];
                    let scale = 1.0 / inner as f64;
                    let g = self.grad_buf(inputs[0]);
                    for bc in 0..shape[0] * shape[1] {
                        let ov = go.data()[bc] * scale;
                        for v in &mut g.data_mut()[bc * inner..(bc + 1) * inner] {
                            *v += ov;
                        }
                    }
                }
            }
            Op::Sum => {
                if self.needs(inputs[0]) {
                    let ov = go.data()[0];
                    let g = self.grad_buf(inputs[0]);
                    for v in g.data_mut().iter_mut() {
                        *v += ov;
                    }
                }
            }
            Op::Mean => {
                if self.needs(inputs[0]) {
                    let n = self.nodes[inputs[0]].value.numel();
                    let ov = go.data()[0] / n as f64;
                    let g = self.grad_buf(inputs[0]);
                    for v in g.data_mut().iter_mut() {
                        *v += ov;
                    }
                }
            }
        }
    }

    fn backward_matmul(&mut self, inputs: &[usize], go: &Tensor) {
        let a = self.nodes[inputs[0]].value.clone();
        let b = self.nodes[inputs[1]].value.clone();
        let d = matmul_dims(&a, &b).expect("shapes validated at forward time");
        if self.needs(inputs[0]) {
            let g = self.grad_buf(inputs[0]);
            for bi in 0..d.batch {
                let gos = &go.data()[bi * d.m * d.n..(bi + 1) * d.m * d.n];
                let bsl = if d.shared_rhs {
                    b.data()
                } else {
                    &b.data()[bi * d.k * d.n..(bi + 1) * d.k * d.n]
                };
                mm_abt_acc(
                    gos,
                    bsl,
                    &mut g.data_mut()[bi * d.m * d.k..(bi + 1) * d.m * d.k],
                    d.m,
                    d.n,
                    d.k,
                );
            }
        }
        if self.needs(inputs[1]) {
            let g = self.grad_buf(inputs[1]);
            for bi in 0..d.batch {
                let asl = &a.data()[bi * d.m * d.k..(bi + 1) * d.m * d.k];
                let gos = &go.data()[bi * d.m * d.n..(bi + 1) * d.m * d.n];
                let dst = if d.shared_rhs {
                    &mut g.data_mut()[..]
                } else {
                    &mut g.data_mut()[bi * d.k * d.n..(bi + 1) * d.k * d.n]
                };
                mm_atb_acc(asl, gos, dst, d.m, d.k, d.n);
            }
        }
    }

    fn backward_conv1d(&mut self, inputs: &[usize], go: &Tensor, stride: usize, padding: usize) {
        let x = self.nodes[inputs[0]].value.clone();
        let w = self.nodes[inputs[1]].value.clone();
        let (b, cin, t) = shape3(&x);
        let (cout, _, k) = shape3(&w);
        let t_out = go.shape()[2];
        if self.needs(inputs[0]) {
            let g = self.grad_buf(inputs[0]);
            for bi in 0..b {
                for co in 0..cout {
                    let orow = &go.data()[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                    for ci in 0..cin {
                        let wrow = &w.data()[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                        let xg = &mut g.data_mut()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                        for (kk, &wv) in wrow.iter().enumerate() {
                            if wv == 0.0 {
                                continue;
                            }
                            let (lo, hi) = conv_tap_range(kk, padding, stride, t, t_out);
                            if stride == 1 {
                                let base = lo + kk - padding;
                                for (xv, &ov) in
                                    xg[base..base + hi - lo].iter_mut().zip(&orow[lo..hi])
                                {
                                    *xv += wv * ov;
                                }
                            } else {
                                for tau in lo..hi {
                                    xg[tau * stride + kk - padding] += wv * orow[tau];
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.needs(inputs[1]) {
            let g = self.grad_buf(inputs[1]);
            for bi in 0..b {
                for co in 0..cout {
                    let orow = &go.data()[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                    for ci in 0..cin {
                        let xrow = &x.data()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                        let wg = &mut g.data_mut()[(co * cin + ci) * k..(co * cin + ci + 1) * k];
                        for (kk, wv) in wg.iter_mut().enumerate() {
                            let (lo, hi) = conv_tap_range(kk, padding, stride, t, t_out);
                            let mut acc = 0.0;
                            if stride == 1 {
                                let base = lo + kk - padding;
                                for (&xv, &ov) in xrow[base..base + hi - lo].iter().zip(&orow[lo..hi])
                                {
                                    acc += xv * ov;
                                }
                            } else {
                                for tau in lo..hi {
                                    acc += xrow[tau * stride + kk - padding] * orow[tau];
                                }
                            }
                            *wv += acc;
                        }
                    }
                }
            }
        }
    }

    fn backward_conv_transpose1d(
        &mut self,
        inputs: &[usize],
        go: &Tensor,
        stride: usize,
        padding: usize,
    ) {
        let x = self.nodes[inputs[0]].value.clone();
        let w = self.nodes[inputs[1]].value.clone();
        let (b, cin, t) = shape3(&x);
        let (_, cout, k) = shape3(&w);
        let t_out = go.shape()[2];
        if self.needs(inputs[0]) {
            let g = self.grad_buf(inputs[0]);
            for bi in 0..b {
                for ci in 0..cin {
                    let xg = &mut g.data_mut()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                    for co in 0..cout {
                        let wrow = &w.data()[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                        let orow =
                            &go.data()[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                        for (kk, &wv) in wrow.iter().enumerate() {
                            if wv == 0.0 {
                                continue;
                            }
                            let (lo, hi) = conv_tap_range(kk, padding, stride, t_out, t);
                            for ti in lo..hi {
                                xg[ti] += wv * orow[ti * stride + kk - padding];
                            }
                        }
                    }
                }
            }
        }
        if self.needs(inputs[1]) {
            let g = self.grad_buf(inputs[1]);
            for bi in 0..b {
                for ci in 0..cin {
                    let xrow = &x.data()[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                    for co in 0..cout {
                        let wg = &mut g.data_mut()[(ci * cout + co) * k..(ci * cout + co + 1) * k];
                        let orow =
                            &go.data()[(bi * cout + co) * t_out..(bi * cout + co + 1) * t_out];
                        for (kk, wv) in wg.iter_mut().enumerate() {
                            let (lo, hi) = conv_tap_range(kk, padding, stride, t_out, t);
                            let mut acc = 0.0;
                            for ti in lo..hi {
                                acc += xrow[ti] * orow[ti * stride + kk - padding];
                            }
                            *wv += acc;
                        }
                    }
                }
            }
        }
    }

    fn backward_conv2d(
        &mut self,
        inputs: &[usize],
        go: &Tensor,
        stride: (usize, usize),
        padding: (usize, usize),
    ) {
        let x = self.nodes[inputs[0]].value.clone();
        let w = self.nodes[inputs[1]].value.clone();
        let (b, cin, h, wd) = shape4(&x);
        let (cout, _, kh, kw) = shape4(&w);
        let (h_out, w_out) = (go.shape()[2], go.shape()[3]);
        let need_x = self.needs(inputs[0]);
        let need_w = self.needs(inputs[1]);
        let mut xg = if need_x {
            self.grad_buf(inputs[0]);
            self.nodes[inputs[0]].grad.take()
        } else {
            None
        };
        let mut wg = if need_w {
            self.grad_buf(inputs[1]);
            self.nodes[inputs[1]].grad.take()
        } else {
            None
        };
        for bi in 0..b {
            for co in 0..cout {
                let obase = (bi * cout + co) * h_out * w_out;
                for ci in 0..cin {
                    let xbase = (bi * cin + ci) * h * wd;
                    let wbase = (co * cin + ci) * kh * kw;
                    for kyy in 0..kh {
                        let (oy_lo, oy_hi) = conv_tap_range(kyy, padding.0, stride.0, h, h_out);
                        for kxx in 0..kw {
                            let wi = wbase + kyy * kw + kxx;
                            let wv = w.data()[wi];
                            let (ox_lo, ox_hi) =
                                conv_tap_range(kxx, padding.1, stride.1, wd, w_out);
                            let mut w_acc = 0.0;
                            for oy in oy_lo..oy_hi {
                                let xrow = xbase + (oy * stride.0 + kyy - padding.0) * wd;
                                let orow = obase + oy * w_out;
                                for ox in ox_lo..ox_hi {
                                    let ov = go.data()[orow + ox];
                                    let xi = xrow + ox * stride.1 + kxx - padding.1;
                                    if let Some(g) = xg.as_mut() {
                                        g.data_mut()[xi] += ov * wv;
                                    }
                                    w_acc += ov * x.data()[xi];
                                }
                            }
                            if let Some(g) = wg.as_mut() {
                                g.data_mut()[wi] += w_acc;
                            }
                        }
                    }
                }
            }
        }
        if need_x {
            self.nodes[inputs[0]].grad = xg;
        }
        if need_w {
            self.nodes[inputs[1]].grad = wg;
        }
    }

    fn backward_layer_norm(&mut self, inputs: &[usize], go: &Tensor, eps: f64) {
        let x = self.nodes[inputs[0]].value.clone();
        let gain = self.nodes[inputs[1]].value.clone();
        let d = *x.shape().last().unwrap();
        let rows = x.numel() / d;
        // Recompute per-row statistics; cheaper than caching them on the tape.
        for r in 0..rows {
            let xrow = &x.data()[r * d..(r + 1) * d];
            let orow = &go.data()[r * d..(r + 1) * d];
            let mean = xrow.iter().sum::<f64>() / d as f64;
            let var = xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            let xhat: Vec<f64> = xrow.iter().map(|v| (v - mean) * inv).collect();
            if self.needs(inputs[1]) {
                let g = self.grad_buf(inputs[1]);
                for j in 0..d {
                    g.data_mut()[j] += orow[j] * xhat[j];
                }
            }
            if self.needs(inputs[2]) {
                let g = self.grad_buf(inputs[2]);
                for j in 0..d {
                    g.data_mut()[j] += orow[j];
                }
            }
            if self.needs(inputs[0]) {
                let dy: Vec<f64> = (0..d).map(|j| orow[j] * gain.data()[j]).collect();
                let mean_dy = dy.iter().sum::<f64>() / d as f64;
                let mean_dy_xhat = dy.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                let g = self.grad_buf(inputs[0]);
                for j in 0..d {
                    g.data_mut()[r * d + j] +=
                        inv * (dy[j] - mean_dy - xhat[j] * mean_dy_xhat);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &Graph, shape: &[usize], data: &[f64]) -> Var {
        g.leaf(Tensor::new(shape.to_vec(), data.to_vec()).unwrap(), true)
    }

    #[test]
    fn matmul_identity() {
        let g = Graph::new();
        let a = leaf(&g, &[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = leaf(&g, &[2, 1], &[3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value().data(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_example() {
        let g = Graph::new();
        let a = leaf(&g, &[1, 2], &[1.0, 2.0]);
        let b = leaf(&g, &[2, 1], &[3.0, 4.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.value().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let g = Graph::new();
        let a = leaf(&g, &[2, 3], &[0.0; 6]);
        let b = leaf(&g, &[2, 2], &[0.0; 4]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn conv1d_identity_kernel() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let k = leaf(&g, &[1, 1, 1], &[1.0]);
        let y = x.conv1d(&k, 1, 0).unwrap();
        assert_eq!(y.value().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv1d_strided_sum_kernel() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 1, 4], &[1.0, 1.0, 1.0, 1.0]);
        let k = leaf(&g, &[1, 1, 2], &[1.0, 1.0]);
        let y = x.conv1d(&k, 2, 0).unwrap();
        assert_eq!(y.value().shape(), &[1, 1, 2]);
        assert_eq!(y.value().data(), &[2.0, 2.0]);
    }

    #[test]
    fn conv1d_kernel_longer_than_input_rejected() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 1, 3], &[1.0; 3]);
        let k = leaf(&g, &[1, 1, 5], &[1.0; 5]);
        assert!(matches!(x.conv1d(&k, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv_transpose_inverts_length() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 1, 5], &[1.0; 5]);
        let k = leaf(&g, &[1, 1, 4], &[0.5; 4]);
        let y = x.conv_transpose1d(&k, 2, 1).unwrap();
        // (5-1)*2 - 2*1 + 4 = 10
        assert_eq!(y.value().shape(), &[1, 1, 10]);
    }

    #[test]
    fn layer_norm_constant_vector_is_zeroed() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 4], &[5.0, 5.0, 5.0, 5.0]);
        let gain = leaf(&g, &[4], &[1.0; 4]);
        let bias = leaf(&g, &[4], &[0.0; 4]);
        let y = x.layer_norm(&gain, &bias, 1e-5).unwrap();
        for &v in y.value().data() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_two_points() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 2], &[1.0, 3.0]);
        let gain = leaf(&g, &[2], &[1.0, 1.0]);
        let bias = leaf(&g, &[2], &[0.0, 0.0]);
        let y = x.layer_norm(&gain, &bias, 1e-10).unwrap();
        // mean 2, population std 1 -> [-1, 1] up to eps correction
        assert!((y.value().data()[0] + 1.0).abs() < 1e-4);
        assert!((y.value().data()[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn softmax_symmetry_and_overflow() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 2], &[0.0, 0.0]);
        let y = x.softmax();
        assert_eq!(y.value().data(), &[0.5, 0.5]);

        let x = leaf(&g, &[1, 2], &[1000.0, 0.0]);
        let y = x.softmax();
        assert!(y.value().is_finite());
        assert!((y.value().data()[0] - 1.0).abs() < 1e-12);
        assert!(y.value().data()[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        let g = Graph::new();
        let x = g.leaf(Tensor::randn(&[7, 11], 3.0, &mut rng), true);
        let y = x.softmax();
        for row in y.value().data().chunks(11) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn lookup_gathers_rows_and_rejects_bad_ids() {
        let g = Graph::new();
        let table = leaf(&g, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let out = table.lookup(&[1]).unwrap();
        assert_eq!(out.value().data(), &[3.0, 4.0]);
        assert!(matches!(table.lookup(&[2]), Err(Error::Dimension(_))));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let g = Graph::new();
        let x = leaf(&g, &[3], &[1.0, 2.0, 3.0]);
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_sum_of_squares() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        x.square().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_twice_rejected() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        let y = x.sum();
        y.backward().unwrap();
        assert!(matches!(y.backward(), Err(Error::Train(_))));
    }

    #[test]
    fn fan_out_accumulates() {
        let g = Graph::new();
        let x = leaf(&g, &[1], &[3.0]);
        // f = x*x + x  ->  f' = 2x + 1 = 7
        let f = x.mul(&x).unwrap().add(&x).unwrap().sum();
        f.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[7.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let g = Graph::new();
        let x = leaf(&g, &[2], &[1.0, 2.0]);
        let c = g.constant(Tensor::from_slice(&[5.0, 5.0]));
        let y = x.mul(&c).unwrap().sum();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[5.0, 5.0]);
        assert!(c.grad().is_none());
    }

    #[test]
    fn repeat_time_broadcasts_and_sums_back() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 1, 2], &[1.0, 2.0]);
        let y = x.repeat_time(3).unwrap();
        assert_eq!(y.shape(), vec![1, 3, 2]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn frames_reflect_padding_counts() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 8], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = x.frames(4, 2).unwrap();
        // pad=2, F = (8 + 4 - 4)/2 + 1 = 5
        assert_eq!(y.shape(), vec![1, 5, 4]);
        // first frame covers padded indices 0..4 -> sources [2,1,0,1]
        assert_eq!(&y.value().data()[..4], &[2.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn delay_add_echo() {
        let g = Graph::new();
        let x = leaf(&g, &[1, 4], &[1.0, 0.0, 0.0, 0.0]);
        let y = x.delay_add(2, 0.5).unwrap();
        assert_eq!(y.value().data(), &[1.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn graph_mixing_rejected() {
        let g1 = Graph::new();
        let g2 = Graph::new();
        let a = g1.leaf(Tensor::from_slice(&[1.0]), true);
        let b = g2.leaf(Tensor::from_slice(&[1.0]), true);
        assert!(a.add(&b).is_err());
    }
}
