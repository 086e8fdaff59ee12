//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its nodes. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and
//! returns gradients for every node and every parameter that was read.

use crate::{Matrix, ParamId, ParamStore, Real};

/// Sentinel used by [`Graph::gather`] for output slots that stay zero.
pub const ZERO_SLOT: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, T),
    Exp(NodeId),
    Square(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    Reshape(NodeId),
    MaxPool(NodeId, Vec<usize>),
    SumAll(NodeId),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Spatial layout of a channels-last grid flattened into one matrix row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
}

/// Result of [`Graph::backward`].
pub struct Gradients<T> {
    nodes: Vec<Option<Matrix<T>>>,
    params: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient with respect to a node, `None` if the loss does not depend on it.
    pub fn node(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.nodes[id.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix<T>> {
        self.params[id.0].as_ref()
    }

    /// Per-parameter gradients, dense (zeros where unused), in store order.
    pub fn into_param_grads(self, store: &ParamStore<T>) -> Vec<Matrix<T>> {
        self.params
            .into_iter()
            .zip(store.ids())
            .map(|(g, id)| {
                g.unwrap_or_else(|| {
                    let p = store.get(id);
                    Matrix::zeros(p.rows(), p.cols())
                })
            })
            .collect()
    }
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self { params, nodes: Vec::new(), param_nodes: vec![None; params.len()] }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Input that gradients are tracked for (e.g. to probe intermediate sensitivities).
    pub fn variable(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Reads a parameter; repeated reads share one node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let n = self.push(self.params.get(id).clone(), Op::Param(id), true);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (rows, cols) = self.shape(a);
        assert_eq!(self.shape(bias), (1, cols), "bias must be 1x{cols}");
        let b = self.value(bias).data();
        let mut v = self.value(a).clone();
        for r in 0..rows {
            for (x, &bb) in v.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *x += bb;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        self.push(v, Op::AddBias(a, bias), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        let ng = self.ng(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> NodeId {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        let ng = self.ng(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.exp());
        let ng = self.ng(a);
        self.push(v, Op::Exp(a), ng)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(v, Op::Square(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.shape(p).0, rows, "concat row mismatch");
                self.shape(p).1
            })
            .collect();
        let cols: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let (rows, cols) = self.shape(a);
        assert!(start + len <= cols, "slice {start}..{} out of {cols} columns", start + len);
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src.row(r)[start..start + len]);
        }
        let ng = self.ng(a);
        self.push(Matrix::from_vec(rows, len, data), Op::SliceCols(a, start), ng)
    }

    /// Builds a `rows×cols` matrix whose flat element `i` is the flat element
    /// `index[i]` of `src`, or zero when `index[i] == ZERO_SLOT`.
    pub fn gather(&mut self, src: NodeId, index: Vec<usize>, rows: usize, cols: usize) -> NodeId {
        assert_eq!(index.len(), rows * cols, "gather index length");
        let s = self.value(src).data();
        let data = index
            .iter()
            .map(|&i| if i == ZERO_SLOT { T::zero() } else { s[i] })
            .collect();
        let ng = self.ng(src);
        self.push(Matrix::from_vec(rows, cols, data), Op::Gather(src, index), ng)
    }

    /// Selects whole rows of `src` (`ZERO_SLOT` rows are zero).
    pub fn gather_rows(&mut self, src: NodeId, rows: &[usize]) -> NodeId {
        let cols = self.shape(src).1;
        let mut index = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if r == ZERO_SLOT {
                index.extend(std::iter::repeat_n(ZERO_SLOT, cols));
            } else {
                index.extend(r * cols..(r + 1) * cols);
            }
        }
        self.gather(src, index, rows.len(), cols)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let v = self.value(a).clone().reshaped(rows, cols);
        let ng = self.ng(a);
        self.push(v, Op::Reshape(a), ng)
    }

    /// Non-overlapping max pooling (stride = kernel, floor on ragged edges)
    /// over each row interpreted as a channels-last grid.
    pub fn max_pool(&mut self, a: NodeId, shape: GridShape, kernel: (usize, usize)) -> (NodeId, GridShape) {
        let (rows, cols) = self.shape(a);
        assert_eq!(cols, shape.len(), "max_pool input width");
        let (kh, kw) = kernel;
        let out = GridShape::new(shape.height / kh, shape.width / kw, shape.channels);
        assert!(out.height > 0 && out.width > 0, "max_pool kernel larger than grid");
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * out.len());
        let mut argmax = Vec::with_capacity(rows * out.len());
        for b in 0..rows {
            let base = b * cols;
            for oh in 0..out.height {
                for ow in 0..out.width {
                    for c in 0..out.channels {
                        let mut best = ZERO_SLOT;
                        let mut best_v = T::neg_infinity();
                        for i in 0..kh {
                            for j in 0..kw {
                                let idx = base + shape.offset(oh * kh + i, ow * kw + j, c);
                                if best == ZERO_SLOT || src[idx] > best_v {
                                    best = idx;
                                    best_v = src[idx];
                                }
                            }
                        }
                        data.push(best_v);
                        argmax.push(best);
                    }
                }
            }
        }
        let ng = self.ng(a);
        let id = self.push(Matrix::from_vec(rows, out.len(), data), Op::MaxPool(a, argmax), ng);
        (id, out)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::SumAll(a), ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len();
        let s = self.sum_all(a);
        self.scale(s, T::one() / T::of(n as f64))
    }

    /// Mean of squared differences over every element.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        let d = self.sub(pred, target);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    /// Reverse sweep from a `1×1` node.
    pub fn backward(&self, loss: NodeId) -> Gradients<T> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar loss");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(T::one()));
        let mut params: Vec<Option<Matrix<T>>> = (0..self.params.len()).map(|_| None).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads, &mut params);
            grads[idx] = Some(g);
        }
        Gradients { nodes: grads, params }
    }

    fn propagate(
        &self,
        node: &Node<T>,
        g: &Matrix<T>,
        grads: &mut [Option<Matrix<T>>],
        params: &mut [Option<Matrix<T>>],
    ) {
        let nodes = &self.nodes;
        let mut acc = |id: NodeId, delta: Matrix<T>| {
            if !nodes[id.0].needs_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |id: NodeId| &nodes[id.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Param(pid) => match &mut params[pid.0] {
                Some(existing) => existing.add_assign(g),
                slot @ None => *slot = Some(g.clone()),
            },
            Op::MatMul(a, b) => {
                if nodes[a.0].needs_grad {
                    acc(*a, g.matmul_t(false, val(*b), true));
                }
                if nodes[b.0].needs_grad {
                    acc(*b, val(*a).matmul_t(true, g, false));
                }
            }
            Op::AddBias(a, bias) => {
                acc(*a, g.clone());
                if nodes[bias.0].needs_grad {
                    let cols = g.cols();
                    let mut colsum = vec![T::zero(); cols];
                    for r in 0..g.rows() {
                        for (s, &v) in colsum.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    acc(*bias, Matrix::row_vector(colsum));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if nodes[a.0].needs_grad {
                    acc(*a, g.zip_map(val(*b), |x, y| x * y));
                }
                if nodes[b.0].needs_grad {
                    acc(*b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(*a, g.map(|v| v * s));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |gv, y| gv * y * (T::one() - y))),
            Op::Tanh(a) => acc(*a, g.zip_map(&node.value, |gv, y| gv * (T::one() - y * y))),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), |gv, x| if x > T::zero() { gv } else { T::zero() })),
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                acc(*a, g.zip_map(val(*a), |gv, x| if x > T::zero() { gv } else { gv * slope }))
            }
            Op::Exp(a) => acc(*a, g.zip_map(&node.value, |gv, y| gv * y)),
            Op::Square(a) => {
                let two = T::of(2.0);
                acc(*a, g.zip_map(val(*a), |gv, x| two * x * gv))
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if nodes[p.0].needs_grad {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[start..start + w]);
                        }
                        acc(p, Matrix::from_vec(rows, w, d));
                    }
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = val(*a).shape();
                let w = g.cols();
                let mut d = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    d.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(g.row(r));
                }
                acc(*a, d);
            }
            Op::Gather(src, index) => {
                let (rows, cols) = val(*src).shape();
                let mut d = Matrix::zeros(rows, cols);
                let dd = d.data_mut();
                for (&i, &gv) in index.iter().zip(g.data()) {
                    if i != ZERO_SLOT {
                        dd[i] += gv;
                    }
                }
                acc(*src, d);
            }
            Op::Reshape(a) => {
                let (rows, cols) = val(*a).shape();
                acc(*a, g.clone().reshaped(rows, cols));
            }
            Op::MaxPool(a, argmax) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Matrix::zeros(rows, cols);
                let dd = d.data_mut();
                for (&i, &gv) in argmax.iter().zip(g.data()) {
                    dd[i] += gv;
                }
                acc(*a, d);
            }
            Op::SumAll(a) => {
                let (rows, cols) = val(*a).shape();
                acc(*a, Matrix::filled(rows, cols, g.get(0, 0)));
            }
        }
    }
}
