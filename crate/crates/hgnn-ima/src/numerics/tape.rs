//! Reverse-mode automatic differentiation over tensor-valued operations.
//!
//! A [`Tape`] records primitive operations eagerly: each call computes the
//! output value and appends a node remembering the operation and its input
//! handles. [`Tape::backward`] walks the nodes in exact reverse recording
//! order and accumulates gradients for every differentiable leaf.
//!
//! The op vocabulary is tailored to attention-style graph models: gathers and
//! scatter-adds over the leading axis, segmented softmax over contiguous edge
//! ranges, per-head block-diagonal linear maps, and a fused bilinear form
//! that evaluates `rowsum((K W_h) * Q)` for every head at once.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::tensor::{matmul, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Tid(usize);

/// Contiguous row ranges; each range is normalized independently by the
/// segment ops. Ranges must be disjoint and sorted.
pub type Segments = Rc<Vec<(usize, usize)>>;

/// Row index list shared by gather/scatter ops.
pub type RowIndex = Rc<Vec<usize>>;

enum Op {
    Leaf { grad: bool },
    MatMul(Tid, Tid),
    /// Per-head block-diagonal product: x is `[n x H*dh]`, w is `[H*dh x dh]`
    /// holding H stacked `[dh x dh]` blocks; output column block h is
    /// `x[:, h] * w[h]`.
    HeadwiseMatMul { x: Tid, w: Tid, heads: usize },
    AddRowBroadcast { x: Tid, b: Tid },
    Add(Tid, Tid),
    Sub(Tid, Tid),
    Mul(Tid, Tid),
    Scale { x: Tid, c: f64 },
    /// Multiplies row r of x by v[r].
    MulColBroadcast { x: Tid, v: Tid },
    /// Multiplies column block h of row r by w[r, h].
    MulHeadBroadcast { x: Tid, w: Tid, heads: usize },
    /// Fused bilinear similarity: out[r, h] = (k[r, h-block] * w[h]) . q[r, h-block].
    BilinearPerHead { k: Tid, q: Tid, w: Tid, heads: usize },
    Sigmoid(Tid),
    Tanh(Tid),
    Abs(Tid),
    SoftmaxRows(Tid),
    LogSoftmaxRows(Tid),
    /// Softmax within each (segment, column) group of a `[rows x cols]` tensor.
    SegmentSoftmax { x: Tid, segments: Segments },
    /// Replaces every row of a segment by the segment's column-wise mean.
    SegmentMeanBroadcast { x: Tid, segments: Segments },
    GatherRows { x: Tid, idx: RowIndex },
    ScatterAddRows { x: Tid, idx: RowIndex },
    ConcatCols(Vec<Tid>),
    SliceCols { x: Tid, start: usize, len: usize },
    Reshape { x: Tid },
    Sum(Tid),
    /// Picks entry `cols[r]` from each row.
    SelectEntries { x: Tid, cols: RowIndex },
    /// Inverted dropout with a precomputed 0/1 mask.
    Dropout { x: Tid, mask: Rc<Vec<f64>>, scale: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients keyed by tape handle, produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. the given node; zeros if it was unused.
    pub fn get(&self, id: Tid) -> Tensor {
        match &self.grads[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(self.shapes[id.0].clone()),
        }
    }

    pub fn take(&mut self, id: Tid) -> Tensor {
        match self.grads[id.0].take() {
            Some(t) => t,
            None => Tensor::zeros(self.shapes[id.0].clone()),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: Tid) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Tid {
        self.nodes.push(Node { op, value });
        Tid(self.nodes.len() - 1)
    }

    /// Registers a differentiable leaf (a parameter).
    pub fn param(&mut self, value: Tensor) -> Tid {
        self.push(Op::Leaf { grad: true }, value)
    }

    /// Registers a constant leaf; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor) -> Tid {
        self.push(Op::Leaf { grad: false }, value)
    }

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn headwise_matmul(&mut self, x: Tid, w: Tid, heads: usize) -> Result<Tid> {
        let xv = self.value(x);
        let wv = self.value(w);
        let d = xv.row_width();
        if d % heads != 0 || wv.shape() != [d, d / heads] {
            return Err(Error::Shape {
                expected: format!("x [n x {d}], w [{d} x {}]", d / heads),
                got: format!("x {:?}, w {:?}", xv.shape(), wv.shape()),
                context: "headwise_matmul".into(),
            });
        }
        let dh = d / heads;
        let n = xv.rows();
        let mut out = vec![0.0; n * d];
        for h in 0..heads {
            let wblock = &wv.data()[h * dh * dh..(h + 1) * dh * dh];
            for r in 0..n {
                let xrow = &xv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                let orow = &mut out[r * d + h * dh..r * d + (h + 1) * dh];
                for a in 0..dh {
                    let xa = xrow[a];
                    if xa == 0.0 {
                        continue;
                    }
                    let wrow = &wblock[a * dh..(a + 1) * dh];
                    for b in 0..dh {
                        orow[b] += xa * wrow[b];
                    }
                }
            }
        }
        let v = Tensor::from_parts(vec![n, d], out);
        Ok(self.push(Op::HeadwiseMatMul { x, w, heads }, v))
    }

    pub fn add_row_broadcast(&mut self, x: Tid, b: Tid) -> Result<Tid> {
        let xv = self.value(x);
        let bv = self.value(b);
        let d = xv.row_width();
        if bv.len() != d {
            return Err(Error::Shape {
                expected: format!("bias of {d}"),
                got: format!("{}", bv.len()),
                context: "add_row_broadcast".into(),
            });
        }
        let mut out = xv.data().to_vec();
        for r in 0..xv.rows() {
            for c in 0..d {
                out[r * d + c] += bv.data()[c];
            }
        }
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(Op::AddRowBroadcast { x, b }, v))
    }

    fn elementwise(&mut self, a: Tid, b: Tid, ctx: &'static str) -> Result<(Vec<usize>, usize)> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                expected: format!("{:?}", av.shape()),
                got: format!("{:?}", bv.shape()),
                context: ctx.into(),
            });
        }
        Ok((av.shape().to_vec(), av.len()))
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (shape, n) = self.elementwise(a, b, "add")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.value(a).data()[i] + self.value(b).data()[i]);
        }
        Ok(self.push(Op::Add(a, b), Tensor::from_parts(shape, out)))
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (shape, n) = self.elementwise(a, b, "sub")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.value(a).data()[i] - self.value(b).data()[i]);
        }
        Ok(self.push(Op::Sub(a, b), Tensor::from_parts(shape, out)))
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Result<Tid> {
        let (shape, n) = self.elementwise(a, b, "mul")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.value(a).data()[i] * self.value(b).data()[i]);
        }
        Ok(self.push(Op::Mul(a, b), Tensor::from_parts(shape, out)))
    }

    pub fn scale(&mut self, x: Tid, c: f64) -> Tid {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|v| v * c).collect();
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::Scale { x, c }, v)
    }

    pub fn mul_col_broadcast(&mut self, x: Tid, v: Tid) -> Result<Tid> {
        let xv = self.value(x);
        let vv = self.value(v);
        if vv.len() != xv.rows() {
            return Err(Error::Shape {
                expected: format!("{} row weights", xv.rows()),
                got: format!("{}", vv.len()),
                context: "mul_col_broadcast".into(),
            });
        }
        let d = xv.row_width();
        let mut out = xv.data().to_vec();
        for r in 0..xv.rows() {
            let w = vv.data()[r];
            for c in 0..d {
                out[r * d + c] *= w;
            }
        }
        let val = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(Op::MulColBroadcast { x, v }, val))
    }

    pub fn mul_head_broadcast(&mut self, x: Tid, w: Tid, heads: usize) -> Result<Tid> {
        let xv = self.value(x);
        let wv = self.value(w);
        let d = xv.row_width();
        if d % heads != 0 || wv.rows() != xv.rows() || wv.row_width() != heads {
            return Err(Error::Shape {
                expected: format!("x [n x {d}] with weights [n x {heads}]"),
                got: format!("x {:?}, w {:?}", xv.shape(), wv.shape()),
                context: "mul_head_broadcast".into(),
            });
        }
        let dh = d / heads;
        let mut out = xv.data().to_vec();
        for r in 0..xv.rows() {
            for h in 0..heads {
                let s = wv.data()[r * heads + h];
                for c in 0..dh {
                    out[r * d + h * dh + c] *= s;
                }
            }
        }
        let val = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(Op::MulHeadBroadcast { x, w, heads }, val))
    }

    pub fn bilinear_per_head(&mut self, k: Tid, q: Tid, w: Tid, heads: usize) -> Result<Tid> {
        let kv = self.value(k);
        let qv = self.value(q);
        let wv = self.value(w);
        let d = kv.row_width();
        if qv.shape() != kv.shape() || d % heads != 0 || wv.shape() != [d, d / heads] {
            return Err(Error::Shape {
                expected: format!("k,q [n x {d}], w [{d} x {}]", d / heads),
                got: format!("k {:?}, q {:?}, w {:?}", kv.shape(), qv.shape(), wv.shape()),
                context: "bilinear_per_head".into(),
            });
        }
        let dh = d / heads;
        let n = kv.rows();
        let mut out = vec![0.0; n * heads];
        for h in 0..heads {
            let wblock = &wv.data()[h * dh * dh..(h + 1) * dh * dh];
            for r in 0..n {
                let krow = &kv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                let qrow = &qv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                let mut acc = 0.0;
                for a in 0..dh {
                    let ka = krow[a];
                    if ka == 0.0 {
                        continue;
                    }
                    let wrow = &wblock[a * dh..(a + 1) * dh];
                    for b in 0..dh {
                        acc += ka * wrow[b] * qrow[b];
                    }
                }
                out[r * heads + h] = acc;
            }
        }
        let v = Tensor::from_parts(vec![n, heads], out);
        Ok(self.push(Op::BilinearPerHead { k, q, w, heads }, v))
    }

    pub fn sigmoid(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|&v| sigmoid_scalar(v)).collect();
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn tanh(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|v| v.tanh()).collect();
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::Tanh(x), v)
    }

    pub fn abs(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let out: Vec<f64> = xv.data().iter().map(|v| v.abs()).collect();
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::Abs(x), v)
    }

    pub fn softmax_rows(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.row_width());
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            let row = &xv.data()[r * d..(r + 1) * d];
            softmax_slice(row, &mut out[r * d..(r + 1) * d]);
        }
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::SoftmaxRows(x), v)
    }

    pub fn log_softmax_rows(&mut self, x: Tid) -> Tid {
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.row_width());
        let mut out = vec![0.0; n * d];
        for r in 0..n {
            let row = &xv.data()[r * d..(r + 1) * d];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for c in 0..d {
                out[r * d + c] = row[c] - lse;
            }
        }
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::LogSoftmaxRows(x), v)
    }

    pub fn segment_softmax(&mut self, x: Tid, segments: Segments) -> Tid {
        let xv = self.value(x);
        let d = xv.row_width();
        let mut out = xv.data().to_vec();
        for &(start, end) in segments.iter() {
            for c in 0..d {
                let mut max = f64::NEG_INFINITY;
                for r in start..end {
                    max = max.max(xv.data()[r * d + c]);
                }
                let mut sum = 0.0;
                for r in start..end {
                    let e = (xv.data()[r * d + c] - max).exp();
                    out[r * d + c] = e;
                    sum += e;
                }
                for r in start..end {
                    out[r * d + c] /= sum;
                }
            }
        }
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::SegmentSoftmax { x, segments }, v)
    }

    pub fn segment_mean_broadcast(&mut self, x: Tid, segments: Segments) -> Tid {
        let xv = self.value(x);
        let d = xv.row_width();
        let mut out = xv.data().to_vec();
        for &(start, end) in segments.iter() {
            let n = (end - start) as f64;
            for c in 0..d {
                let mut sum = 0.0;
                for r in start..end {
                    sum += xv.data()[r * d + c];
                }
                let mean = sum / n;
                for r in start..end {
                    out[r * d + c] = mean;
                }
            }
        }
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        self.push(Op::SegmentMeanBroadcast { x, segments }, v)
    }

    pub fn gather_rows(&mut self, x: Tid, idx: RowIndex) -> Tid {
        let xv = self.value(x);
        let d = xv.row_width();
        let mut out = Vec::with_capacity(idx.len() * d);
        for &r in idx.iter() {
            out.extend_from_slice(&xv.data()[r * d..(r + 1) * d]);
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = idx.len();
        let v = Tensor::from_parts(shape, out);
        self.push(Op::GatherRows { x, idx }, v)
    }

    pub fn scatter_add_rows(&mut self, x: Tid, idx: RowIndex, rows: usize) -> Result<Tid> {
        let xv = self.value(x);
        if xv.rows() != idx.len() {
            return Err(Error::Shape {
                expected: format!("{} rows", idx.len()),
                got: format!("{}", xv.rows()),
                context: "scatter_add_rows".into(),
            });
        }
        let d = xv.row_width();
        let mut out = vec![0.0; rows * d];
        for (i, &r) in idx.iter().enumerate() {
            for c in 0..d {
                out[r * d + c] += xv.data()[i * d + c];
            }
        }
        let mut shape = xv.shape().to_vec();
        shape[0] = rows;
        let v = Tensor::from_parts(shape, out);
        Ok(self.push(Op::ScatterAddRows { x, idx }, v))
    }

    pub fn concat_cols(&mut self, xs: &[Tid]) -> Result<Tid> {
        if xs.is_empty() {
            return Err(Error::data("concat_cols of empty list"));
        }
        let n = self.value(xs[0]).rows();
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let xv = self.value(x);
            if xv.rows() != n {
                return Err(Error::Shape {
                    expected: format!("{n} rows"),
                    got: format!("{}", xv.rows()),
                    context: "concat_cols".into(),
                });
            }
            widths.push(xv.row_width());
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&x, &w) in xs.iter().zip(&widths) {
                let xv = self.value(x);
                out.extend_from_slice(&xv.data()[r * w..(r + 1) * w]);
            }
        }
        let v = Tensor::from_parts(vec![n, total], out);
        Ok(self.push(Op::ConcatCols(xs.to_vec()), v))
    }

    pub fn slice_cols(&mut self, x: Tid, start: usize, len: usize) -> Result<Tid> {
        let xv = self.value(x);
        let d = xv.row_width();
        if start + len > d {
            return Err(Error::Shape {
                expected: format!("slice within {d} columns"),
                got: format!("{start}..{}", start + len),
                context: "slice_cols".into(),
            });
        }
        let n = xv.rows();
        let mut out = Vec::with_capacity(n * len);
        for r in 0..n {
            out.extend_from_slice(&xv.data()[r * d + start..r * d + start + len]);
        }
        let v = Tensor::from_parts(vec![n, len], out);
        Ok(self.push(Op::SliceCols { x, start, len }, v))
    }

    pub fn reshape(&mut self, x: Tid, shape: impl Into<Vec<usize>>) -> Result<Tid> {
        let v = self.value(x).reshaped(shape)?;
        Ok(self.push(Op::Reshape { x }, v))
    }

    pub fn sum(&mut self, x: Tid) -> Tid {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn select_entries(&mut self, x: Tid, cols: RowIndex) -> Result<Tid> {
        let xv = self.value(x);
        if cols.len() != xv.rows() {
            return Err(Error::Shape {
                expected: format!("{} column picks", xv.rows()),
                got: format!("{}", cols.len()),
                context: "select_entries".into(),
            });
        }
        let d = xv.row_width();
        let mut out = Vec::with_capacity(cols.len());
        for (r, &c) in cols.iter().enumerate() {
            out.push(xv.data()[r * d + c]);
        }
        let v = Tensor::from_parts(vec![cols.len()], out);
        Ok(self.push(Op::SelectEntries { x, cols }, v))
    }

    /// Inverted dropout: kept units are scaled by `1/(1-rate)` so evaluation
    /// needs no rescaling. The mask must contain only 0.0 and 1.0.
    pub fn dropout(&mut self, x: Tid, mask: Rc<Vec<f64>>, rate: f64) -> Result<Tid> {
        let xv = self.value(x);
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} not in [0, 1)")));
        }
        if mask.len() != xv.len() {
            return Err(Error::Shape {
                expected: format!("mask of {}", xv.len()),
                got: format!("{}", mask.len()),
                context: "dropout".into(),
            });
        }
        let scale = 1.0 / (1.0 - rate);
        let out: Vec<f64> = xv
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(v, m)| v * m * scale)
            .collect();
        let v = Tensor::from_parts(xv.shape().to_vec(), out);
        Ok(self.push(Op::Dropout { x, mask, scale }, v))
    }

    /// Runs reverse accumulation from a scalar loss node.
    pub fn backward(&self, loss: Tid) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape {
                expected: "scalar loss".into(),
                got: format!("{:?}", lv.shape()),
                context: "backward".into(),
            });
        }
        if !lv.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let gy = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf { grad } => {
                    if *grad {
                        grads[i] = Some(gy);
                    }
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (p, q, r) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    // dA = dY B^T
                    {
                        let ga = self.grad_buf(&mut grads, *a);
                        for i2 in 0..p {
                            for j in 0..r {
                                let g = gy.data()[i2 * r + j];
                                if g == 0.0 {
                                    continue;
                                }
                                for k in 0..q {
                                    ga[i2 * q + k] += g * bv.data()[k * r + j];
                                }
                            }
                        }
                    }
                    // dB = A^T dY
                    {
                        let gb = self.grad_buf(&mut grads, *b);
                        for k in 0..q {
                            for i2 in 0..p {
                                let a_ik = av.data()[i2 * q + k];
                                if a_ik == 0.0 {
                                    continue;
                                }
                                for j in 0..r {
                                    gb[k * r + j] += a_ik * gy.data()[i2 * r + j];
                                }
                            }
                        }
                    }
                }
                Op::HeadwiseMatMul { x, w, heads } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let d = xv.row_width();
                    let dh = d / heads;
                    let n = xv.rows();
                    {
                        let gx = self.grad_buf(&mut grads, *x);
                        for h in 0..*heads {
                            let wblock = &wv.data()[h * dh * dh..(h + 1) * dh * dh];
                            for r in 0..n {
                                let gyrow = &gy.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                let gxrow = &mut gx[r * d + h * dh..r * d + (h + 1) * dh];
                                for a in 0..dh {
                                    let wrow = &wblock[a * dh..(a + 1) * dh];
                                    let mut acc = 0.0;
                                    for b in 0..dh {
                                        acc += gyrow[b] * wrow[b];
                                    }
                                    gxrow[a] += acc;
                                }
                            }
                        }
                    }
                    {
                        let gw = self.grad_buf(&mut grads, *w);
                        for h in 0..*heads {
                            let gwblock = &mut gw[h * dh * dh..(h + 1) * dh * dh];
                            for r in 0..n {
                                let xrow = &xv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                let gyrow = &gy.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                for a in 0..dh {
                                    let xa = xrow[a];
                                    if xa == 0.0 {
                                        continue;
                                    }
                                    for b in 0..dh {
                                        gwblock[a * dh + b] += xa * gyrow[b];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::AddRowBroadcast { x, b } => {
                    let d = self.value(*x).row_width();
                    let n = self.value(*x).rows();
                    {
                        let gx = self.grad_buf(&mut grads, *x);
                        for (g, out) in gy.data().iter().zip(gx.iter_mut()) {
                            *out += g;
                        }
                    }
                    {
                        let gb = self.grad_buf(&mut grads, *b);
                        for r in 0..n {
                            for c in 0..d {
                                gb[c] += gy.data()[r * d + c];
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, gy.data());
                    self.accumulate(&mut grads, *b, gy.data());
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, gy.data());
                    let gb = self.grad_buf(&mut grads, *b);
                    for (g, out) in gy.data().iter().zip(gb.iter_mut()) {
                        *out -= g;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data().to_vec();
                    let bv = self.value(*b).data().to_vec();
                    {
                        let ga = self.grad_buf(&mut grads, *a);
                        for i2 in 0..bv.len() {
                            ga[i2] += gy.data()[i2] * bv[i2];
                        }
                    }
                    {
                        let gb = self.grad_buf(&mut grads, *b);
                        for i2 in 0..av.len() {
                            gb[i2] += gy.data()[i2] * av[i2];
                        }
                    }
                }
                Op::Scale { x, c } => {
                    let gx = self.grad_buf(&mut grads, *x);
                    for (g, out) in gy.data().iter().zip(gx.iter_mut()) {
                        *out += g * c;
                    }
                }
                Op::MulColBroadcast { x, v } => {
                    let xv = self.value(*x);
                    let vv = self.value(*v);
                    let d = xv.row_width();
                    {
                        let gx = self.grad_buf(&mut grads, *x);
                        for r in 0..xv.rows() {
                            let wv = vv.data()[r];
                            for c in 0..d {
                                gx[r * d + c] += gy.data()[r * d + c] * wv;
                            }
                        }
                    }
                    {
                        let gv = self.grad_buf(&mut grads, *v);
                        for r in 0..xv.rows() {
                            let mut acc = 0.0;
                            for c in 0..d {
                                acc += gy.data()[r * d + c] * xv.data()[r * d + c];
                            }
                            gv[r] += acc;
                        }
                    }
                }
                Op::MulHeadBroadcast { x, w, heads } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let d = xv.row_width();
                    let dh = d / heads;
                    {
                        let gx = self.grad_buf(&mut grads, *x);
                        for r in 0..xv.rows() {
                            for h in 0..*heads {
                                let s = wv.data()[r * heads + h];
                                for c in 0..dh {
                                    gx[r * d + h * dh + c] += gy.data()[r * d + h * dh + c] * s;
                                }
                            }
                        }
                    }
                    {
                        let gw = self.grad_buf(&mut grads, *w);
                        for r in 0..xv.rows() {
                            for h in 0..*heads {
                                let mut acc = 0.0;
                                for c in 0..dh {
                                    acc += gy.data()[r * d + h * dh + c]
                                        * xv.data()[r * d + h * dh + c];
                                }
                                gw[r * heads + h] += acc;
                            }
                        }
                    }
                }
                Op::BilinearPerHead { k, q, w, heads } => {
                    let kv = self.value(*k);
                    let qv = self.value(*q);
                    let wv = self.value(*w);
                    let d = kv.row_width();
                    let dh = d / heads;
                    let n = kv.rows();
                    // dK[r,h] = gy[r,h] * (Q_h W_h^T), dQ[r,h] = gy[r,h] * (K_h W_h),
                    // dW_h    = K_h^T diag(gy[:,h]) Q_h
                    {
                        let gk = self.grad_buf(&mut grads, *k);
                        for h in 0..*heads {
                            let wblock = &wv.data()[h * dh * dh..(h + 1) * dh * dh];
                            for r in 0..n {
                                let g = gy.data()[r * heads + h];
                                if g == 0.0 {
                                    continue;
                                }
                                let qrow = &qv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                let gkrow = &mut gk[r * d + h * dh..r * d + (h + 1) * dh];
                                for a in 0..dh {
                                    let wrow = &wblock[a * dh..(a + 1) * dh];
                                    let mut acc = 0.0;
                                    for b in 0..dh {
                                        acc += wrow[b] * qrow[b];
                                    }
                                    gkrow[a] += g * acc;
                                }
                            }
                        }
                    }
                    {
                        let gq = self.grad_buf(&mut grads, *q);
                        for h in 0..*heads {
                            let wblock = &wv.data()[h * dh * dh..(h + 1) * dh * dh];
                            for r in 0..n {
                                let g = gy.data()[r * heads + h];
                                if g == 0.0 {
                                    continue;
                                }
                                let krow = &kv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                let gqrow = &mut gq[r * d + h * dh..r * d + (h + 1) * dh];
                                for b in 0..dh {
                                    let mut acc = 0.0;
                                    for a in 0..dh {
                                        acc += krow[a] * wblock[a * dh + b];
                                    }
                                    gqrow[b] += g * acc;
                                }
                            }
                        }
                    }
                    {
                        let gw = self.grad_buf(&mut grads, *w);
                        for h in 0..*heads {
                            let gwblock = &mut gw[h * dh * dh..(h + 1) * dh * dh];
                            for r in 0..n {
                                let g = gy.data()[r * heads + h];
                                if g == 0.0 {
                                    continue;
                                }
                                let krow = &kv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                let qrow = &qv.data()[r * d + h * dh..r * d + (h + 1) * dh];
                                for a in 0..dh {
                                    let ka = g * krow[a];
                                    if ka == 0.0 {
                                        continue;
                                    }
                                    for b in 0..dh {
                                        gwblock[a * dh + b] += ka * qrow[b];
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let gx = self.grad_buf(&mut grads, *x);
                    for i2 in 0..y.len() {
                        let s = y.data()[i2];
                        gx[i2] += gy.data()[i2] * s * (1.0 - s);
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let gx = self.grad_buf(&mut grads, *x);
                    for i2 in 0..y.len() {
                        let t = y.data()[i2];
                        gx[i2] += gy.data()[i2] * (1.0 - t * t);
                    }
                }
                Op::Abs(x) => {
                    let xv = self.value(*x);
                    let gx = self.grad_buf(&mut grads, *x);
                    for i2 in 0..xv.len() {
                        let s = if xv.data()[i2] > 0.0 {
                            1.0
                        } else if xv.data()[i2] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        gx[i2] += gy.data()[i2] * s;
                    }
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let d = y.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for r in 0..y.rows() {
                        let yrow = &y.data()[r * d..(r + 1) * d];
                        let grow = &gy.data()[r * d..(r + 1) * d];
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for c in 0..d {
                            gx[r * d + c] += yrow[c] * (grow[c] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows(x) => {
                    let y = &node.value;
                    let d = y.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for r in 0..y.rows() {
                        let yrow = &y.data()[r * d..(r + 1) * d];
                        let grow = &gy.data()[r * d..(r + 1) * d];
                        let gsum: f64 = grow.iter().sum();
                        for c in 0..d {
                            gx[r * d + c] += grow[c] - yrow[c].exp() * gsum;
                        }
                    }
                }
                Op::SegmentSoftmax { x, segments } => {
                    let y = &node.value;
                    let d = y.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for &(start, end) in segments.iter() {
                        for c in 0..d {
                            let mut dot = 0.0;
                            for r in start..end {
                                dot += y.data()[r * d + c] * gy.data()[r * d + c];
                            }
                            for r in start..end {
                                gx[r * d + c] +=
                                    y.data()[r * d + c] * (gy.data()[r * d + c] - dot);
                            }
                        }
                    }
                }
                Op::SegmentMeanBroadcast { x, segments } => {
                    let d = node.value.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for &(start, end) in segments.iter() {
                        let n = (end - start) as f64;
                        for c in 0..d {
                            let mut acc = 0.0;
                            for r in start..end {
                                acc += gy.data()[r * d + c];
                            }
                            let share = acc / n;
                            for r in start..end {
                                gx[r * d + c] += share;
                            }
                        }
                    }
                }
                Op::GatherRows { x, idx } => {
                    let d = node.value.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for (i2, &r) in idx.iter().enumerate() {
                        for c in 0..d {
                            gx[r * d + c] += gy.data()[i2 * d + c];
                        }
                    }
                }
                Op::ScatterAddRows { x, idx } => {
                    let d = node.value.row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for (i2, &r) in idx.iter().enumerate() {
                        for c in 0..d {
                            gx[i2 * d + c] += gy.data()[r * d + c];
                        }
                    }
                }
                Op::ConcatCols(xs) => {
                    let n = node.value.rows();
                    let total = node.value.row_width();
                    let mut offset = 0;
                    for &x in xs {
                        let w = self.value(x).row_width();
                        let gx = self.grad_buf(&mut grads, x);
                        for r in 0..n {
                            for c in 0..w {
                                gx[r * w + c] += gy.data()[r * total + offset + c];
                            }
                        }
                        offset += w;
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let d = self.value(*x).row_width();
                    let n = self.value(*x).rows();
                    let gx = self.grad_buf(&mut grads, *x);
                    for r in 0..n {
                        for c in 0..*len {
                            gx[r * d + start + c] += gy.data()[r * len + c];
                        }
                    }
                }
                Op::Reshape { x } => {
                    self.accumulate(&mut grads, *x, gy.data());
                }
                Op::Sum(x) => {
                    let g = gy.data()[0];
                    let gx = self.grad_buf(&mut grads, *x);
                    for out in gx.iter_mut() {
                        *out += g;
                    }
                }
                Op::SelectEntries { x, cols } => {
                    let d = self.value(*x).row_width();
                    let gx = self.grad_buf(&mut grads, *x);
                    for (r, &c) in cols.iter().enumerate() {
                        gx[r * d + c] += gy.data()[r];
                    }
                }
                Op::Dropout { x, mask, scale } => {
                    let gx = self.grad_buf(&mut grads, *x);
                    for i2 in 0..mask.len() {
                        gx[i2] += gy.data()[i2] * mask[i2] * scale;
                    }
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    /// Borrow-splitting helper: gradient buffer of `id`, created on demand.
    fn grad_buf<'g>(&self, grads: &'g mut [Option<Tensor>], id: Tid) -> &'g mut [f64] {
        if grads[id.0].is_none() {
            grads[id.0] = Some(Tensor::zeros(self.value(id).shape().to_vec()));
        }
        grads[id.0].as_mut().unwrap().data_mut()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: Tid, add: &[f64]) {
        let buf = self.grad_buf(grads, id);
        for (out, g) in buf.iter_mut().zip(add) {
            *out += g;
        }
    }
}

pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_slice(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_parts(
            shape.to_vec(),
            (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        )
    }

    /// Builds the program twice per coordinate to compare the tape's analytic
    /// gradients against central finite differences.
    fn check_grads(
        inputs: &[Tensor],
        build: impl Fn(&mut Tape, &[Tid]) -> Tid,
        tol: f64,
    ) {
        let run = |vals: &[Tensor]| -> (f64, Vec<Tensor>) {
            let mut tape = Tape::new();
            let ids: Vec<Tid> = vals.iter().map(|t| tape.param(t.clone())).collect();
            let out = build(&mut tape, &ids);
            let loss = tape.sum(out);
            let value = tape.value(loss).item().unwrap();
            let mut grads = tape.backward(loss).unwrap();
            let g = ids.iter().map(|&id| grads.take(id)).collect();
            (value, g)
        };
        let (_, analytic) = run(inputs);
        let h = 1e-6;
        for (which, input) in inputs.iter().enumerate() {
            for c in 0..input.len() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[c] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[c] -= h;
                let numeric = (run(&plus).0 - run(&minus).0) / (2.0 * h);
                let got = analytic[which].data()[c];
                let err = (got - numeric).abs() / numeric.abs().max(1e-6);
                assert!(
                    err <= tol,
                    "input {which} coord {c}: analytic {got} vs numeric {numeric}"
                );
            }
        }
    }

    fn segs(v: &[(usize, usize)]) -> Segments {
        Rc::new(v.to_vec())
    }

    #[test]
    fn grad_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(&[3, 4], &mut rng);
        let b = rand_tensor(&[4, 2], &mut rng);
        check_grads(&[a, b], |t, ids| t.matmul(ids[0], ids[1]).unwrap(), 1e-6);
    }

    #[test]
    fn grad_headwise_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&[3, 6], &mut rng);
        let w = rand_tensor(&[6, 3], &mut rng); // 2 heads of 3x3
        check_grads(
            &[x, w],
            |t, ids| t.headwise_matmul(ids[0], ids[1], 2).unwrap(),
            1e-6,
        );
    }

    #[test]
    fn grad_bilinear_per_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = rand_tensor(&[4, 6], &mut rng);
        let q = rand_tensor(&[4, 6], &mut rng);
        let w = rand_tensor(&[6, 2], &mut rng); // 3 heads of 2x2
        check_grads(
            &[k, q, w],
            |t, ids| t.bilinear_per_head(ids[0], ids[1], ids[2], 3).unwrap(),
            1e-6,
        );
    }

    #[test]
    fn grad_elementwise_and_broadcasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_tensor(&[3, 4], &mut rng);
        let b = rand_tensor(&[3, 4], &mut rng);
        let bias = rand_tensor(&[4], &mut rng);
        let v = rand_tensor(&[3], &mut rng);
        let hw = rand_tensor(&[3, 2], &mut rng);
        check_grads(&[a.clone(), b.clone()], |t, ids| t.add(ids[0], ids[1]).unwrap(), 1e-6);
        check_grads(&[a.clone(), b.clone()], |t, ids| t.sub(ids[0], ids[1]).unwrap(), 1e-6);
        check_grads(&[a.clone(), b], |t, ids| t.mul(ids[0], ids[1]).unwrap(), 1e-6);
        check_grads(&[a.clone()], |t, ids| t.scale(ids[0], -2.5), 1e-6);
        check_grads(
            &[a.clone(), bias],
            |t, ids| t.add_row_broadcast(ids[0], ids[1]).unwrap(),
            1e-6,
        );
        check_grads(
            &[a.clone(), v],
            |t, ids| t.mul_col_broadcast(ids[0], ids[1]).unwrap(),
            1e-6,
        );
        check_grads(
            &[a, hw],
            |t, ids| t.mul_head_broadcast(ids[0], ids[1], 2).unwrap(),
            1e-6,
        );
    }

    #[test]
    fn grad_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&[2, 5], &mut rng);
        check_grads(&[x.clone()], |t, ids| t.sigmoid(ids[0]), 1e-6);
        check_grads(&[x.clone()], |t, ids| t.tanh(ids[0]), 1e-6);
        // Keep values away from 0 where abs is not differentiable.
        let far: Vec<f64> = x.data().iter().map(|v| v + v.signum() * 0.5).collect();
        let far = Tensor::from_parts(vec![2, 5], far);
        check_grads(&[far], |t, ids| t.abs(ids[0]), 1e-6);
    }

    #[test]
    fn grad_softmaxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_tensor(&[3, 4], &mut rng);
        // Compose with a fixed weighting so the softmax Jacobian is exercised
        // off the simplex tangent.
        let w = rand_tensor(&[3, 4], &mut rng);
        let wc = w.clone();
        check_grads(
            &[x.clone()],
            move |t, ids| {
                let s = t.softmax_rows(ids[0]);
                let k = t.constant(wc.clone());
                t.mul(s, k).unwrap()
            },
            1e-5,
        );
        let wc = w.clone();
        check_grads(
            &[x.clone()],
            move |t, ids| {
                let s = t.log_softmax_rows(ids[0]);
                let k = t.constant(wc.clone());
                t.mul(s, k).unwrap()
            },
            1e-5,
        );
        let wc = w;
        let e = rand_tensor(&[5, 2], &mut rng);
        let we = rand_tensor(&[5, 2], &mut rng);
        let _ = wc;
        check_grads(
            &[e.clone()],
            move |t, ids| {
                let s = t.segment_softmax(ids[0], segs(&[(0, 2), (2, 5)]));
                let k = t.constant(we.clone());
                t.mul(s, k).unwrap()
            },
            1e-5,
        );
        check_grads(
            &[e],
            |t, ids| t.segment_mean_broadcast(ids[0], segs(&[(0, 2), (2, 5)])),
            1e-6,
        );
    }

    #[test]
    fn grad_index_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(&[4, 3], &mut rng);
        let idx: RowIndex = Rc::new(vec![2, 0, 2, 3]);
        check_grads(
            &[x.clone()],
            {
                let idx = idx.clone();
                move |t, ids| t.gather_rows(ids[0], idx.clone())
            },
            1e-6,
        );
        check_grads(
            &[x.clone()],
            {
                let idx = idx.clone();
                move |t, ids| t.scatter_add_rows(ids[0], idx.clone(), 6).unwrap()
            },
            1e-6,
        );
        let cols: RowIndex = Rc::new(vec![0, 2, 1, 0]);
        check_grads(
            &[x.clone()],
            move |t, ids| t.select_entries(ids[0], cols.clone()).unwrap(),
            1e-6,
        );
        let y = rand_tensor(&[4, 2], &mut rng);
        check_grads(
            &[x.clone(), y],
            |t, ids| t.concat_cols(&[ids[0], ids[1]]).unwrap(),
            1e-6,
        );
        check_grads(&[x.clone()], |t, ids| t.slice_cols(ids[0], 1, 2).unwrap(), 1e-6);
        check_grads(&[x], |t, ids| t.reshape(ids[0], [12]).unwrap(), 1e-6);
    }

    #[test]
    fn grad_dropout() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = rand_tensor(&[2, 4], &mut rng);
        let mask = Rc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        check_grads(
            &[x],
            move |t, ids| t.dropout(ids[0], mask.clone(), 0.25).unwrap(),
            1e-6,
        );
    }

    #[test]
    fn backward_simple_identities() {
        // loss = sum(x) gives grad 1 everywhere.
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([3], vec![2.0, -1.0, 0.5]).unwrap());
        let loss = tape.sum(x);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(x).data(), &[1.0, 1.0, 1.0]);

        // loss = x . y gives grad x = y and grad y = x.
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([1, 3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.param(Tensor::new([1, 3], vec![-1.0, 0.5, 4.0]).unwrap());
        let p = tape.mul(x, y).unwrap();
        let loss = tape.sum(p);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(x).data(), &[-1.0, 0.5, 4.0]);
        assert_eq!(grads.take(y).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([2], vec![1.0, 2.0]).unwrap());
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([2], vec![1.0, 2.0]).unwrap());
        let unused = tape.param(Tensor::new([3], vec![1.0, 1.0, 1.0]).unwrap());
        let loss = tape.sum(x);
        let mut grads = tape.backward(loss).unwrap();
        assert_eq!(grads.take(unused).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_leaves_accumulate_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([2], vec![1.0, 2.0]).unwrap());
        let c = tape.constant(Tensor::new([2], vec![3.0, 4.0]).unwrap());
        let p = tape.mul(x, c).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[3.0, 4.0]);
        assert_eq!(grads.get(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn segment_softmax_normalizes_per_segment_and_column() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new([5, 2], vec![1.0; 10]).unwrap());
        let s = tape.segment_softmax(x, segs(&[(0, 2), (2, 5)]));
        let v = tape.value(s);
        for c in 0..2 {
            assert!((v.at(0, c) - 0.5).abs() < 1e-15);
            assert!((v.at(2, c) - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
