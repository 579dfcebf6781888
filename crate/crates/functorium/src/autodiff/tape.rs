//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Values are computed eagerly as nodes are recorded. The reverse pass
//! ([`Tape::gradient_nodes`]) does not accumulate floats directly: it records
//! the adjoint computation as new tape nodes, so a gradient is itself a
//! differentiable expression. This is what makes the gradient penalty's
//! parameter gradient exact — the inner input-gradient of a critic is
//! re-recorded as a forward expression and the outer backward pass simply
//! runs through it.
//!
//! Conventions:
//! - batches are matrices with one sample per row; elementwise ops apply to
//!   any shape; `matmul`/`affine` are strictly 2-D.
//! - subgradients at the `relu`/`abs` kink and at the `l2_norm` origin are 0.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// a · bᵀ
    MatMulNT(NodeId, NodeId),
    /// aᵀ · b
    MatMulTN(NodeId, NodeId),
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Abs(NodeId),
    /// up ∘ [gate > 0]; the adjoint carrier for `relu`.
    ReluMaskMul {
        gate: NodeId,
        up: NodeId,
    },
    /// up ∘ sign(gate) with sign(0) = 0; the adjoint carrier for `abs`.
    SignMul {
        gate: NodeId,
        up: NodeId,
    },
    Sum(NodeId),
    SumRows(NodeId),
    BroadcastRows {
        v: NodeId,
    },
    BroadcastLike {
        s: NodeId,
    },
    L2Norm(NodeId),
    Concat(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceVec {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    /// Embed a vector into a zero vector at `start`.
    ScatterVec {
        x: NodeId,
        start: usize,
    },
    ScatterRows {
        x: NodeId,
        start: usize,
    },
    ScatterCols {
        x: NodeId,
        start: usize,
    },
    Scale(NodeId, f64),
    Reshape(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only record of a computation. Create one per loss evaluation and
/// drop it after reading gradients; recording and backward are
/// single-threaded by construction (`&mut self`).
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Inserts an input value. Leaves are the usual gradient targets.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Alias of [`Tape::leaf`] for values that are data rather than
    /// optimization targets.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    // ---- elementwise binary ----

    fn zip(&mut self, a: NodeId, b: NodeId, name: &str, f: fn(f64, f64) -> f64) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{name}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let va = self.nodes[a.0].value.data();
        let vb = self.nodes[b.0].value.data();
        let data: Vec<f64> = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let op = match name {
            "add" => Op::Add(a, b),
            "sub" => Op::Sub(a, b),
            "mul" => Op::Mul(a, b),
            "div" => Op::Div(a, b),
            _ => unreachable!(),
        };
        Ok(self.push(op, Tensor::new(shape, data)?))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "mul", |x, y| x * y)
    }

    /// Elementwise quotient; used internally by adjoint expressions
    /// (`l2_norm`), kept off the public op list documented in the crate root.
    fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip(a, b, "div", |x, y| x / y)
    }

    // ---- matrix products ----

    fn mat_dims(&self, id: NodeId, name: &str) -> Result<(usize, usize)> {
        match *self.shape(id) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Shape(format!("{name}: expected matrix, got {s:?}"))),
        }
    }

    /// a (n×k) · b (k×m) → n×m.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.mat_dims(a, "matmul lhs")?;
        let (k2, m) = self.mat_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul: inner dims {k} vs {k2} differ"
            )));
        }
        let va = self.nodes[a.0].value.data();
        let vb = self.nodes[b.0].value.data();
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let arow = &va[i * k..(i + 1) * k];
            let out = &mut data[i * m..(i + 1) * m];
            for (p, &av) in arow.iter().enumerate() {
                let brow = &vb[p * m..(p + 1) * m];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        Ok(self.push(Op::MatMul(a, b), Tensor::matrix(n, m, data)?))
    }

    /// a (n×m) · bᵀ (m×k) → n×k.
    fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.mat_dims(a, "matmul_nt lhs")?;
        let (k, m2) = self.mat_dims(b, "matmul_nt rhs")?;
        if m != m2 {
            return Err(Error::Shape(format!(
                "matmul_nt: inner dims {m} vs {m2} differ"
            )));
        }
        let va = self.nodes[a.0].value.data();
        let vb = self.nodes[b.0].value.data();
        let mut data = vec![0.0; n * k];
        for i in 0..n {
            let arow = &va[i * m..(i + 1) * m];
            for j in 0..k {
                let brow = &vb[j * m..(j + 1) * m];
                data[i * k + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            }
        }
        Ok(self.push(Op::MatMulNT(a, b), Tensor::matrix(n, k, data)?))
    }

    /// aᵀ (k×n) · b (n×m) → k×m.
    fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.mat_dims(a, "matmul_tn lhs")?;
        let (n2, m) = self.mat_dims(b, "matmul_tn rhs")?;
        if n != n2 {
            return Err(Error::Shape(format!(
                "matmul_tn: outer dims {n} vs {n2} differ"
            )));
        }
        let va = self.nodes[a.0].value.data();
        let vb = self.nodes[b.0].value.data();
        let mut data = vec![0.0; k * m];
        for i in 0..n {
            let arow = &va[i * k..(i + 1) * k];
            let brow = &vb[i * m..(i + 1) * m];
            for (j, &av) in arow.iter().enumerate() {
                let out = &mut data[j * m..(j + 1) * m];
                for (o, &bv) in out.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        Ok(self.push(Op::MatMulTN(a, b), Tensor::matrix(k, m, data)?))
    }

    /// x (n×a) · w (a×m) + b (m), bias broadcast over rows.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, a) = self.mat_dims(x, "affine input")?;
        let (a2, m) = self.mat_dims(w, "affine weight")?;
        if a != a2 {
            return Err(Error::Shape(format!(
                "affine: input width {a} vs weight height {a2}"
            )));
        }
        match *self.shape(b) {
            [bm] if bm == m => {}
            ref s => {
                return Err(Error::Shape(format!(
                    "affine: bias shape {s:?}, expected [{m}]"
                )))
            }
        }
        let vx = self.nodes[x.0].value.data();
        let vw = self.nodes[w.0].value.data();
        let vb = self.nodes[b.0].value.data().to_vec();
        let mut data = vec![0.0; n * m];
        for i in 0..n {
            let xrow = &vx[i * a..(i + 1) * a];
            let out = &mut data[i * m..(i + 1) * m];
            out.copy_from_slice(&vb);
            for (p, &xv) in xrow.iter().enumerate() {
                let wrow = &vw[p * m..(p + 1) * m];
                for (o, &wv) in out.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, Tensor::matrix(n, m, data)?))
    }

    // ---- elementwise unary ----

    fn unary(&mut self, x: NodeId, op: fn(NodeId) -> Op, f: fn(f64) -> f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(op(x), Tensor::new(shape, data).expect("same shape"))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Tanh, f64::tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Relu, |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Sigmoid, |v| 1.0 / (1.0 + (-v).exp()))
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        self.unary(x, Op::Abs, f64::abs)
    }

    fn relu_mask_mul(&mut self, gate: NodeId, up: NodeId) -> Result<NodeId> {
        if self.shape(gate) != self.shape(up) {
            return Err(Error::Shape("relu mask: shapes differ".into()));
        }
        let g = self.nodes[gate.0].value.data();
        let u = self.nodes[up.0].value.data();
        let data: Vec<f64> = g
            .iter()
            .zip(u)
            .map(|(&gv, &uv)| if gv > 0.0 { uv } else { 0.0 })
            .collect();
        let shape = self.shape(gate).to_vec();
        Ok(self.push(Op::ReluMaskMul { gate, up }, Tensor::new(shape, data)?))
    }

    fn sign_mul(&mut self, gate: NodeId, up: NodeId) -> Result<NodeId> {
        if self.shape(gate) != self.shape(up) {
            return Err(Error::Shape("sign mask: shapes differ".into()));
        }
        let g = self.nodes[gate.0].value.data();
        let u = self.nodes[up.0].value.data();
        let data: Vec<f64> = g
            .iter()
            .zip(u)
            .map(|(&gv, &uv)| {
                if gv > 0.0 {
                    uv
                } else if gv < 0.0 {
                    -uv
                } else {
                    0.0
                }
            })
            .collect();
        let shape = self.shape(gate).to_vec();
        Ok(self.push(Op::SignMul { gate, up }, Tensor::new(shape, data)?))
    }

    // ---- reductions ----

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.nodes[x.0].value.numel();
        if n == 0 {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s = self.sum(x);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn l1_norm(&mut self, x: NodeId) -> NodeId {
        let a = self.abs(x);
        self.sum(a)
    }

    pub fn l2_norm(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().map(|v| v * v).sum();
        self.push(Op::L2Norm(x), Tensor::scalar(s.sqrt()))
    }

    /// Column sums: (n×m) → (m). Internal; adjoint of bias broadcast.
    fn sum_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, m) = self.mat_dims(x, "sum_rows")?;
        let v = self.nodes[x.0].value.data();
        let mut data = vec![0.0; m];
        for i in 0..n {
            for (o, &xv) in data.iter_mut().zip(&v[i * m..(i + 1) * m]) {
                *o += xv;
            }
        }
        Ok(self.push(Op::SumRows(x), Tensor::vector(data)))
    }

    fn broadcast_rows(&mut self, v: NodeId, rows: usize) -> Result<NodeId> {
        let m = match *self.shape(v) {
            [m] => m,
            ref s => return Err(Error::Shape(format!("broadcast_rows of {s:?}"))),
        };
        let src = self.nodes[v.0].value.data().to_vec();
        let mut data = Vec::with_capacity(rows * m);
        for _ in 0..rows {
            data.extend_from_slice(&src);
        }
        Ok(self.push(Op::BroadcastRows { v }, Tensor::matrix(rows, m, data)?))
    }

    fn broadcast_like(&mut self, s: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.nodes[s.0].value.to_scalar()?;
        let t = Tensor::filled(shape, v);
        Ok(self.push(Op::BroadcastLike { s }, t))
    }

    // ---- structure ----

    /// Concatenates vectors (scalars count as length-1) into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of no parts".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            if self.nodes[p.0].value.rank() > 1 {
                return Err(Error::Shape("concat expects vectors or scalars".into()));
            }
            data.extend_from_slice(self.nodes[p.0].value.data());
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols of no parts".into()));
        }
        let n = self.mat_dims(parts[0], "concat_cols")?.0;
        let mut cols = 0;
        for &p in parts {
            let (pn, pc) = self.mat_dims(p, "concat_cols")?;
            if pn != n {
                return Err(Error::Shape("concat_cols row counts differ".into()));
            }
            cols += pc;
        }
        let mut data = Vec::with_capacity(n * cols);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        Ok(self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::matrix(n, cols, data)?,
        ))
    }

    /// Contiguous range of a vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = match *self.shape(x) {
            [n] => n,
            ref s => return Err(Error::Shape(format!("slice of non-vector {s:?}"))),
        };
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice {start}..{} out of bounds for length {n}",
                start + len
            )));
        }
        let data = self.nodes[x.0].value.data()[start..start + len].to_vec();
        Ok(self.push(Op::SliceVec { x, start }, Tensor::vector(data)))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (n, m) = self.mat_dims(x, "slice_rows")?;
        if start + len > n {
            return Err(Error::Shape(format!(
                "row slice {start}..{} out of bounds for {n} rows",
                start + len
            )));
        }
        let data = self.nodes[x.0].value.data()[start * m..(start + len) * m].to_vec();
        Ok(self.push(Op::SliceRows { x, start }, Tensor::matrix(len, m, data)?))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (n, m) = self.mat_dims(x, "slice_cols")?;
        if start + len > m {
            return Err(Error::Shape(format!(
                "column slice {start}..{} out of bounds for {m} columns",
                start + len
            )));
        }
        let v = self.nodes[x.0].value.data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&v[r * m + start..r * m + start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start }, Tensor::matrix(n, len, data)?))
    }

    fn scatter_vec(&mut self, x: NodeId, start: usize, full: usize) -> Result<NodeId> {
        let len = match *self.shape(x) {
            [l] => l,
            ref s => return Err(Error::Shape(format!("scatter of non-vector {s:?}"))),
        };
        let mut data = vec![0.0; full];
        data[start..start + len].copy_from_slice(self.nodes[x.0].value.data());
        Ok(self.push(Op::ScatterVec { x, start }, Tensor::vector(data)))
    }

    fn scatter_rows(&mut self, x: NodeId, start: usize, rows: usize) -> Result<NodeId> {
        let (n, m) = self.mat_dims(x, "scatter_rows")?;
        let mut data = vec![0.0; rows * m];
        data[start * m..(start + n) * m].copy_from_slice(self.nodes[x.0].value.data());
        Ok(self.push(Op::ScatterRows { x, start }, Tensor::matrix(rows, m, data)?))
    }

    fn scatter_cols(&mut self, x: NodeId, start: usize, cols: usize) -> Result<NodeId> {
        let (n, m) = self.mat_dims(x, "scatter_cols")?;
        let mut data = vec![0.0; n * cols];
        let v = self.nodes[x.0].value.data();
        for r in 0..n {
            data[r * cols + start..r * cols + start + m].copy_from_slice(&v[r * m..(r + 1) * m]);
        }
        Ok(self.push(Op::ScatterCols { x, start }, Tensor::matrix(n, cols, data)?))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| v * c).collect();
        let shape = self.shape(x).to_vec();
        self.push(
            Op::Scale(x, c),
            Tensor::new(shape, data).expect("same shape"),
        )
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = Tensor::new(shape.to_vec(), self.nodes[x.0].value.data().to_vec())?;
        Ok(self.push(Op::Reshape(x), t))
    }

    // ---- reverse pass ----

    /// Records the adjoint of `out` with respect to each node in `wrt` as new
    /// tape nodes and returns their ids. `out` must be scalar. Nodes that do
    /// not influence `out` get a zero-filled adjoint.
    pub fn gradient_nodes(&mut self, out: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if !self.nodes[out.0].value.is_scalar() {
            return Err(Error::Shape(format!(
                "backward from non-scalar output of shape {:?}",
                self.shape(out)
            )));
        }
        let horizon = out.0;
        let mut adjoint: Vec<Option<NodeId>> = vec![None; horizon + 1];
        adjoint[out.0] = Some(self.scalar(1.0));

        for idx in (0..=horizon).rev() {
            let up = match adjoint[idx] {
                Some(u) => u,
                None => continue,
            };
            let op = self.nodes[idx].op.clone();
            let contributions = self.adjoint_contributions(&op, NodeId(idx), up)?;
            for (parent, contrib) in contributions {
                debug_assert!(parent.0 < idx, "tape order violated");
                adjoint[parent.0] = Some(match adjoint[parent.0] {
                    Some(acc) => self.add(acc, contrib)?,
                    None => contrib,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adjoint.get(w.0).copied().flatten() {
                Some(id) => Ok(id),
                None => {
                    let z = Tensor::zeros(self.shape(w));
                    Ok(self.leaf(z))
                }
            })
            .collect()
    }

    /// Adjoint contributions of one node to each of its parents.
    fn adjoint_contributions(
        &mut self,
        op: &Op,
        node: NodeId,
        up: NodeId,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((a, up));
                out.push((b, up));
            }
            Op::Sub(a, b) => {
                out.push((a, up));
                let n = self.scale(up, -1.0);
                out.push((b, n));
            }
            Op::Mul(a, b) => {
                let da = self.mul(up, b)?;
                let db = self.mul(up, a)?;
                out.push((a, da));
                out.push((b, db));
            }
            Op::Div(a, b) => {
                let da = self.div(up, b)?;
                out.push((a, da));
                let bb = self.mul(b, b)?;
                let q = self.div(up, bb)?;
                let qa = self.mul(q, a)?;
                let db = self.scale(qa, -1.0);
                out.push((b, db));
            }
            Op::MatMul(a, b) => {
                let da = self.matmul_nt(up, b)?;
                let db = self.matmul_tn(a, up)?;
                out.push((a, da));
                out.push((b, db));
            }
            Op::MatMulNT(a, b) => {
                let da = self.matmul(up, b)?;
                let db = self.matmul_tn(up, a)?;
                out.push((a, da));
                out.push((b, db));
            }
            Op::MatMulTN(a, b) => {
                let da = self.matmul_nt(b, up)?;
                let db = self.matmul(a, up)?;
                out.push((a, da));
                out.push((b, db));
            }
            Op::Affine { x, w, b } => {
                let dx = self.matmul_nt(up, w)?;
                let dw = self.matmul_tn(x, up)?;
                let db = self.sum_rows(up)?;
                out.push((x, dx));
                out.push((w, dw));
                out.push((b, db));
            }
            Op::Tanh(x) => {
                let ones = self.constant(Tensor::filled(self.shape(node), 1.0));
                let yy = self.mul(node, node)?;
                let d = self.sub(ones, yy)?;
                let dx = self.mul(up, d)?;
                out.push((x, dx));
            }
            Op::Sigmoid(x) => {
                let ones = self.constant(Tensor::filled(self.shape(node), 1.0));
                let om = self.sub(ones, node)?;
                let d = self.mul(node, om)?;
                let dx = self.mul(up, d)?;
                out.push((x, dx));
            }
            Op::Relu(x) => {
                let dx = self.relu_mask_mul(x, up)?;
                out.push((x, dx));
            }
            Op::Abs(x) => {
                let dx = self.sign_mul(x, up)?;
                out.push((x, dx));
            }
            // The gates of the mask ops have zero derivative almost
            // everywhere; only the carried adjoint propagates.
            Op::ReluMaskMul { gate, up: inner } => {
                let d = self.relu_mask_mul(gate, up)?;
                out.push((inner, d));
            }
            Op::SignMul { gate, up: inner } => {
                let d = self.sign_mul(gate, up)?;
                out.push((inner, d));
            }
            Op::Sum(x) => {
                let shape = self.shape(x).to_vec();
                let dx = self.broadcast_like(up, &shape)?;
                out.push((x, dx));
            }
            Op::SumRows(x) => {
                let rows = self.mat_dims(x, "sum_rows adjoint")?.0;
                let dx = self.broadcast_rows(up, rows)?;
                out.push((x, dx));
            }
            Op::BroadcastRows { v } => {
                let dv = self.sum_rows(up)?;
                out.push((v, dv));
            }
            Op::BroadcastLike { s } => {
                let ds = self.sum(up);
                out.push((s, ds));
            }
            Op::L2Norm(x) => {
                // d‖x‖/dx = x/‖x‖; subgradient 0 at the origin.
                if self.nodes[node.0].value.to_scalar()? != 0.0 {
                    let q = self.div(up, node)?;
                    let shape = self.shape(x).to_vec();
                    let qb = self.broadcast_like(q, &shape)?;
                    let dx = self.mul(qb, x)?;
                    out.push((x, dx));
                }
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.numel();
                    let mut piece = self.slice(up, offset, len)?;
                    if self.nodes[p.0].value.is_scalar() {
                        piece = self.reshape(piece, &[])?;
                    }
                    out.push((p, piece));
                    offset += len;
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.mat_dims(p, "concat_cols adjoint")?.1;
                    let piece = self.slice_cols(up, offset, c)?;
                    out.push((p, piece));
                    offset += c;
                }
            }
            Op::SliceVec { x, start } => {
                let full = self.nodes[x.0].value.numel();
                let dx = self.scatter_vec(up, start, full)?;
                out.push((x, dx));
            }
            Op::SliceRows { x, start } => {
                let rows = self.mat_dims(x, "slice_rows adjoint")?.0;
                let dx = self.scatter_rows(up, start, rows)?;
                out.push((x, dx));
            }
            Op::SliceCols { x, start } => {
                let cols = self.mat_dims(x, "slice_cols adjoint")?.1;
                let dx = self.scatter_cols(up, start, cols)?;
                out.push((x, dx));
            }
            Op::ScatterVec { x, start } => {
                let len = self.nodes[x.0].value.numel();
                let dx = self.slice(up, start, len)?;
                out.push((x, dx));
            }
            Op::ScatterRows { x, start } => {
                let n = self.mat_dims(x, "scatter_rows adjoint")?.0;
                let dx = self.slice_rows(up, start, n)?;
                out.push((x, dx));
            }
            Op::ScatterCols { x, start } => {
                let m = self.mat_dims(x, "scatter_cols adjoint")?.1;
                let dx = self.slice_cols(up, start, m)?;
                out.push((x, dx));
            }
            Op::Scale(x, c) => {
                let dx = self.scale(up, c);
                out.push((x, dx));
            }
            Op::Reshape(x) => {
                let shape = self.shape(x).to_vec();
                let dx = self.reshape(up, &shape)?;
                out.push((x, dx));
            }
        }
        Ok(out)
    }

    /// Runs the reverse pass and returns gradient values for `wrt`.
    pub fn backward(&mut self, out: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        let ids = self.gradient_nodes(out, wrt)?;
        Ok(ids.into_iter().map(|id| self.value(id).clone()).collect())
    }
}

/// Maximum over coordinates of `|g_ad − g_fd| / max(1, |g_fd|)` where `g_fd`
/// is the central difference of `f` at `x` with step `h`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite difference step must be > 0".into(),
        ));
    }
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone());
    let out = f(&mut tape, xid)?;
    let grad = tape.backward(out, &[xid])?.remove(0);

    let eval = |data: Vec<f64>| -> Result<f64> {
        let mut t = Tape::new();
        let id = t.leaf(Tensor::new(x.shape().to_vec(), data)?);
        let o = f(&mut t, id)?;
        t.value(o).to_scalar()
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.data().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (grad.data()[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = t.tanh(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_ones() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let b = t.leaf(Tensor::matrix(3, 1, vec![1.0; 3]).unwrap());
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 1]);
        assert_eq!(t.value(c).data(), &[3.0, 3.0]);
    }

    #[test]
    fn matmul_inner_mismatch_rejected() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 3, vec![1.0; 6]).unwrap());
        let b = t.leaf(Tensor::matrix(2, 2, vec![1.0; 4]).unwrap());
        assert!(t.matmul(a, b).is_err());
    }

    #[test]
    fn concat_dims() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = t.leaf(Tensor::vector(vec![3.0, 4.0, 5.0]));
        let c = t.concat(&[a, b]).unwrap();
        assert_eq!(t.value(c).shape(), &[5]);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.3, -0.7, 2.0]));
        let s = t.sum(x);
        let g = t.backward(s, &[x]).unwrap().remove(0);
        assert_eq!(g.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_of_mean_tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.0; 4]));
        let y = t.tanh(x);
        let m = t.mean(y).unwrap();
        let g = t.backward(m, &[x]).unwrap().remove(0);
        for &v in g.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_of_l1_on_positive_entries() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.5, 1.5, 0.01]));
        let n = t.l1_norm(x);
        let g = t.backward(n, &[x]).unwrap().remove(0);
        assert_eq!(g.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_from_non_scalar_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = t.scale(x, 2.0);
        assert!(t.backward(y, &[x]).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = t.leaf(Tensor::vector(vec![3.0]));
        let s = t.sum(x);
        let g = t.backward(s, &[y]).unwrap().remove(0);
        assert_eq!(g.data(), &[0.0]);
    }

    /// Builds one scalar-valued expression per public primitive from a flat
    /// leaf vector, so central differences can probe every input coordinate.
    fn primitive_cases() -> Vec<(
        &'static str,
        usize,
        Box<dyn Fn(&mut Tape, NodeId) -> Result<NodeId>>,
    )> {
        vec![
            (
                "add",
                8,
                Box::new(|t, x| {
                    let a = t.slice(x, 0, 4)?;
                    let b = t.slice(x, 4, 4)?;
                    let s = t.add(a, b)?;
                    let s2 = t.mul(s, s)?;
                    Ok(t.sum(s2))
                }),
            ),
            (
                "sub",
                8,
                Box::new(|t, x| {
                    let a = t.slice(x, 0, 4)?;
                    let b = t.slice(x, 4, 4)?;
                    let s = t.sub(a, b)?;
                    let s2 = t.mul(s, s)?;
                    Ok(t.sum(s2))
                }),
            ),
            (
                "mul",
                8,
                Box::new(|t, x| {
                    let a = t.slice(x, 0, 4)?;
                    let b = t.slice(x, 4, 4)?;
                    let s = t.mul(a, b)?;
                    Ok(t.sum(s))
                }),
            ),
            (
                "matmul",
                12,
                Box::new(|t, x| {
                    let a = t.slice(x, 0, 6)?;
                    let a = t.reshape(a, &[2, 3])?;
                    let b = t.slice(x, 6, 6)?;
                    let b = t.reshape(b, &[3, 2])?;
                    let m = t.matmul(a, b)?;
                    let m2 = t.mul(m, m)?;
                    Ok(t.sum(m2))
                }),
            ),
            (
                "affine",
                17,
                Box::new(|t, x| {
                    let xin = t.slice(x, 0, 6)?;
                    let xin = t.reshape(xin, &[2, 3])?;
                    let w = t.slice(x, 6, 9)?;
                    let w = t.reshape(w, &[3, 3])?;
                    let b = t.slice(x, 15, 2)?;
                    // weight is 3×3 but affine needs a×m with m = bias len: use 3×?; adjust
                    let w = t.slice_cols(w, 0, 2)?;
                    let y = t.affine(xin, w, b)?;
                    let y2 = t.mul(y, y)?;
                    Ok(t.sum(y2))
                }),
            ),
            (
                "tanh",
                6,
                Box::new(|t, x| {
                    let y = t.tanh(x);
                    let y2 = t.mul(y, y)?;
                    Ok(t.sum(y2))
                }),
            ),
            (
                "relu",
                6,
                Box::new(|t, x| {
                    let y = t.relu(x);
                    let y2 = t.mul(y, y)?;
                    Ok(t.sum(y2))
                }),
            ),
            (
                "sigmoid",
                6,
                Box::new(|t, x| {
                    let y = t.sigmoid(x);
                    Ok(t.sum(y))
                }),
            ),
            (
                "abs",
                6,
                Box::new(|t, x| {
                    let y = t.abs(x);
                    let y2 = t.mul(y, y)?;
                    Ok(t.sum(y2))
                }),
            ),
            (
                "sum",
                6,
                Box::new(|t, x| {
                    let s = t.sum(x);
                    Ok(t.mul(s, s)?)
                }),
            ),
            (
                "mean",
                6,
                Box::new(|t, x| {
                    let m = t.mean(x)?;
                    Ok(t.mul(m, m)?)
                }),
            ),
            (
                "l1_norm",
                6,
                Box::new(|t, x| {
                    let n = t.l1_norm(x);
                    Ok(t.mul(n, n)?)
                }),
            ),
            (
                "l2_norm",
                6,
                Box::new(|t, x| {
                    let n = t.l2_norm(x);
                    Ok(t.mul(n, n)?)
                }),
            ),
            (
                "concat",
                6,
                Box::new(|t, x| {
                    let a = t.slice(x, 0, 2)?;
                    let b = t.slice(x, 2, 4)?;
                    let c = t.concat(&[a, b])?;
                    let c2 = t.mul(c, c)?;
                    Ok(t.sum(c2))
                }),
            ),
            (
                "slice",
                6,
                Box::new(|t, x| {
                    let a = t.slice(x, 1, 3)?;
                    let a2 = t.mul(a, a)?;
                    Ok(t.sum(a2))
                }),
            ),
            (
                "slice_rows_cols",
                6,
                Box::new(|t, x| {
                    let m = t.reshape(x, &[2, 3])?;
                    let r = t.slice_rows(m, 0, 1)?;
                    let c = t.slice_cols(m, 1, 2)?;
                    let rs = t.sum(r);
                    let cs = t.sum(c);
                    let q = t.mul(rs, cs)?;
                    Ok(q)
                }),
            ),
            (
                "scale",
                6,
                Box::new(|t, x| {
                    let y = t.scale(x, -1.7);
                    let y2 = t.mul(y, y)?;
                    Ok(t.sum(y2))
                }),
            ),
            (
                "concat_cols",
                6,
                Box::new(|t, x| {
                    let m = t.reshape(x, &[2, 3])?;
                    let a = t.slice_cols(m, 0, 1)?;
                    let b = t.slice_cols(m, 1, 2)?;
                    let c = t.concat_cols(&[b, a])?;
                    let c2 = t.mul(c, c)?;
                    Ok(t.sum(c2))
                }),
            ),
        ]
    }

    #[test]
    fn primitives_match_central_differences() {
        let mut r = rng(11);
        for (name, dim, f) in primitive_cases() {
            for trial in 0..100 {
                // keep entries away from relu/abs kinks
                let data: Vec<f64> = (0..dim)
                    .map(|_| {
                        let v: f64 = r.gen_range(0.05..1.0);
                        if r.gen_bool(0.5) {
                            v
                        } else {
                            -v
                        }
                    })
                    .collect();
                let x = Tensor::vector(data);
                let err = finite_diff_check(&f, &x, 1e-5).unwrap();
                assert!(err < 1e-4, "{name} trial {trial}: max relative error {err}");
            }
        }
    }

    #[test]
    fn chain_rule_matches_manual_two_tape_composition() {
        // f(g(x)) on one tape vs the vector-Jacobian product assembled from
        // two separate tapes; both are exact so they agree to 1e-12.
        let mut r = rng(5);
        for _ in 0..50 {
            let x = Tensor::vector(rand_vec(&mut r, 3));
            let w_g = Tensor::matrix(3, 4, rand_vec(&mut r, 12)).unwrap();
            let b_g = Tensor::vector(rand_vec(&mut r, 4));
            let w_f = Tensor::matrix(4, 1, rand_vec(&mut r, 4)).unwrap();

            // one tape: f(g(x)) = sum((tanh(x·Wg + bg))·Wf)
            let mut t = Tape::new();
            let xid = t.leaf(x.clone());
            let xm = t.reshape(xid, &[1, 3]).unwrap();
            let wg = t.constant(w_g.clone());
            let bg = t.constant(b_g.clone());
            let h = t.affine(xm, wg, bg).unwrap();
            let h = t.tanh(h);
            let wf = t.constant(w_f.clone());
            let y = t.matmul(h, wf).unwrap();
            let y = t.sum(y);
            let full = t.backward(y, &[xid]).unwrap().remove(0);

            // two tapes: gy = df/dh at h0, then d(h·gy)/dx
            let mut t1 = Tape::new();
            let x1 = t1.leaf(x.clone());
            let xm1 = t1.reshape(x1, &[1, 3]).unwrap();
            let wg1 = t1.constant(w_g.clone());
            let bg1 = t1.constant(b_g.clone());
            let h1 = t1.affine(xm1, wg1, bg1).unwrap();
            let h1 = t1.tanh(h1);
            let h0 = t1.value(h1).clone();

            let mut t2 = Tape::new();
            let hid = t2.leaf(h0);
            let wf2 = t2.constant(w_f.clone());
            let y2 = t2.matmul(hid, wf2).unwrap();
            let y2 = t2.sum(y2);
            let gy = t2.backward(y2, &[hid]).unwrap().remove(0);

            let gyc = t1.constant(gy);
            let dot = t1.mul(h1, gyc).unwrap();
            let dot = t1.sum(dot);
            let composed = t1.backward(dot, &[x1]).unwrap().remove(0);

            for (a, b) in full.data().iter().zip(composed.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_is_linear_in_the_output() {
        let mut r = rng(9);
        for _ in 0..50 {
            let x = Tensor::vector(rand_vec(&mut r, 5));
            let alpha = r.gen_range(-2.0..2.0);
            let beta = r.gen_range(-2.0..2.0);

            let mut t = Tape::new();
            let xid = t.leaf(x);
            let f = t.tanh(xid);
            let f = t.sum(f);
            let g2 = t.mul(xid, xid).unwrap();
            let g = t.sum(g2);

            let gf = t.backward(f, &[xid]).unwrap().remove(0);
            let gg = t.backward(g, &[xid]).unwrap().remove(0);

            let sf = t.scale(f, alpha);
            let sg = t.scale(g, beta);
            let h = t.add(sf, sg).unwrap();
            let gh = t.backward(h, &[xid]).unwrap().remove(0);

            for i in 0..5 {
                let expect = alpha * gf.data()[i] + beta * gg.data()[i];
                assert!((gh.data()[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_gradient_through_l2_norm() {
        // p(x) = (‖∇_x q‖₂ − 1)² with q = sum(c ∘ x): the inner gradient is
        // the constant c, so p is constant in x but quadratic in c.
        let c0 = vec![0.6, -0.8];
        let mut t = Tape::new();
        let c = t.leaf(Tensor::vector(c0.clone()));
        let x = t.leaf(Tensor::vector(vec![0.3, 0.4]));
        let q = t.mul(c, x).unwrap();
        let q = t.sum(q);
        let g = t.gradient_nodes(q, &[x]).unwrap()[0];
        let norm = t.l2_norm(g);
        let one = t.scalar(1.0);
        let d = t.sub(norm, one).unwrap();
        let p = t.mul(d, d).unwrap();

        // ‖c‖ = 1 here so p = 0 and dp/dc = 2(‖c‖−1)·c/‖c‖ = 0
        assert!((t.value(p).to_scalar().unwrap()).abs() < 1e-15);
        let dc = t.backward(p, &[c]).unwrap().remove(0);
        for &v in dc.data() {
            assert!(v.abs() < 1e-12);
        }

        // and with ‖c‖ = 2: p = 1, dp/dc = 2·(2−1)·c/2 = c/‖c‖·2(‖c‖−1)
        let c1 = vec![1.2, -1.6];
        let mut t = Tape::new();
        let c = t.leaf(Tensor::vector(c1.clone()));
        let x = t.leaf(Tensor::vector(vec![0.3, 0.4]));
        let q = t.mul(c, x).unwrap();
        let q = t.sum(q);
        let g = t.gradient_nodes(q, &[x]).unwrap()[0];
        let norm = t.l2_norm(g);
        let one = t.scalar(1.0);
        let d = t.sub(norm, one).unwrap();
        let p = t.mul(d, d).unwrap();
        assert!((t.value(p).to_scalar().unwrap() - 1.0).abs() < 1e-12);
        let dc = t.backward(p, &[c]).unwrap().remove(0);
        for (i, &v) in dc.data().iter().enumerate() {
            let expect = 2.0 * (2.0 - 1.0) * c1[i] / 2.0;
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn finite_diff_check_on_sum_is_tiny() {
        let x = Tensor::vector(vec![0.4, -1.3, 2.2]);
        let err = finite_diff_check(|t, x| Ok(t.sum(x)), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }
}
