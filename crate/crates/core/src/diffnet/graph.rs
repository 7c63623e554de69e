//! Computation graph over a fixed vocabulary of dense-matrix primitives.
//!
//! A [`Graph`] is built symbolically, evaluated by [`Graph::forward`] into a
//! [`Tape`] of node values, and differentiated in reverse mode by
//! [`Graph::grad`]. [`Graph::jvp`] appends the forward-mode tangent of a
//! subgraph as ordinary nodes, so the tangent itself can be differentiated in
//! reverse mode again. That is how second-order quantities (the input
//! gradient penalty) get their parameter gradients.

use std::sync::Arc;

use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Index of a node inside a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    /// Fed by the caller at `forward`, by slot.
    Input(usize),
    /// Internal leaf initialised to zeros and overwritten via [`Graph::set_leaf`].
    Aux,
    Param(ParamId),
    Zeros,
    MatMul(NodeId, NodeId),
    /// `x + 1 b` with `b` a single row broadcast over the rows of `x`.
    AddBias(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    /// Mean over rows of softmax cross-entropy against fixed labels; 1x1.
    SoftmaxCrossEntropy(NodeId, Arc<[usize]>),
    /// Mean of every entry; 1x1.
    Mean(NodeId),
    /// Euclidean norm of each row; rows x 1.
    RowNorm(NodeId),
    /// `scale * x + shift`, elementwise.
    Affine(NodeId, f64, f64),
    /// `wa * a + wb * b`.
    Combine(NodeId, f64, NodeId, f64),
    Concat(Vec<NodeId>),
    /// Columns `start..end`.
    Slice(NodeId, usize, usize),
    Hadamard(NodeId, NodeId),
    /// `1[pre > 0] * x`; carries no gradient into `pre`.
    ReluMask(NodeId, NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Aux => "aux",
            Op::Param(_) => "param",
            Op::Zeros => "zeros",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxCrossEntropy(..) => "softmax_xent",
            Op::Mean(_) => "mean",
            Op::RowNorm(_) => "row_norm",
            Op::Affine(..) => "affine",
            Op::Combine(..) => "combine",
            Op::Concat(_) => "concat",
            Op::Slice(..) => "slice",
            Op::Hadamard(..) => "hadamard",
            Op::ReluMask(..) => "relu_mask",
        }
    }

    fn operands(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Aux | Op::Param(_) | Op::Zeros => vec![],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::SoftmaxCrossEntropy(x, _)
            | Op::Mean(x)
            | Op::RowNorm(x)
            | Op::Affine(x, ..)
            | Op::Slice(x, ..) => vec![*x],
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Combine(a, _, b, _)
            | Op::Hadamard(a, b)
            | Op::ReluMask(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
}

/// Node values produced by [`Graph::forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tape {
    values: Vec<Matrix>,
}

impl Tape {
    pub fn value(&self, node: NodeId) -> &Matrix {
        &self.values[node.0]
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        self.values[node.0].item().ok_or(Error::NotScalar(node.0))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    input_count: usize,
    param_nodes: Vec<(ParamId, NodeId)>,
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

    pub fn shape(&self, node: NodeId) -> (usize, usize) {
        let n = &self.nodes[node.0];
        (n.rows, n.cols)
    }

    pub fn op(&self, node: NodeId) -> &Op {
        &self.nodes[node.0].op
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize) -> NodeId {
        self.nodes.push(Node { op, rows, cols });
        NodeId(self.nodes.len() - 1)
    }

    /// Declares the next input slot.
    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        let slot = self.input_count;
        self.input_count += 1;
        self.push(Op::Input(slot), rows, cols)
    }

    pub fn aux(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Aux, rows, cols)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Zeros, rows, cols)
    }

    /// Node for a stored parameter. Each parameter maps to a single node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&(_, node)) = self.param_nodes.iter().find(|(p, _)| *p == id) {
            return node;
        }
        let (rows, cols) = store.get(id).shape();
        let node = self.push(Op::Param(id), rows, cols);
        self.param_nodes.push((id, node));
        node
    }

    pub fn param_node(&self, id: ParamId) -> Option<NodeId> {
        self.param_nodes.iter().find(|(p, _)| *p == id).map(|&(_, n)| n)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::Shape(format!("matmul {ar}x{ac} by {br}x{bc}")));
        }
        Ok(self.push(Op::MatMul(a, b), ar, bc))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if self.shape(bias) != (1, c) {
            return Err(Error::Shape(format!("bias {:?} for {r}x{c} input", self.shape(bias))));
        }
        Ok(self.push(Op::AddBias(x, bias), r, c))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        self.push(Op::Relu(x), r, c)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        self.push(Op::Sigmoid(x), r, c)
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (r, c) = self.shape(logits);
        if labels.len() != r || r == 0 {
            return Err(Error::Shape(format!("{} labels for {r} rows of logits", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Shape(format!("label {bad} out of {c} classes")));
        }
        Ok(self.push(Op::SoftmaxCrossEntropy(logits, labels.into()), 1, 1))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x), 1, 1)
    }

    pub fn row_norm(&mut self, x: NodeId) -> NodeId {
        let (r, _) = self.shape(x);
        self.push(Op::RowNorm(x), r, 1)
    }

    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let (r, c) = self.shape(x);
        self.push(Op::Affine(x, scale, shift), r, c)
    }

    pub fn combine(&mut self, a: NodeId, wa: f64, b: NodeId, wb: f64) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "combine")?;
        Ok(self.push(Op::Combine(a, wa, b, wb), shape.0, shape.1))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::Shape(format!("concat rows {r} vs {rows}")));
            }
            cols += c;
        }
        Ok(self.push(Op::Concat(parts.to_vec()), rows, cols))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start >= end || end > c {
            return Err(Error::Shape(format!("column slice {start}..{end} of width {c}")));
        }
        Ok(self.push(Op::Slice(x, start, end), r, end - start))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "hadamard")?;
        Ok(self.push(Op::Hadamard(a, b), shape.0, shape.1))
    }

    pub fn relu_mask(&mut self, pre: NodeId, x: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(pre, x, "relu_mask")?;
        Ok(self.push(Op::ReluMask(pre, x), shape.0, shape.1))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape(format!("{what} {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    /// Evaluates every node. `inputs` are matched to input slots in
    /// declaration order.
    pub fn forward(&self, params: &ParamStore, inputs: &[Matrix]) -> Result<Tape> {
        if inputs.len() != self.input_count {
            return Err(Error::Shape(format!(
                "graph declares {} inputs, {} supplied",
                self.input_count,
                inputs.len()
            )));
        }
        let mut tape = Tape {
            values: Vec::with_capacity(self.nodes.len()),
        };
        for i in 0..self.nodes.len() {
            let v = self.eval_node(i, &tape.values, params, inputs)?;
            tape.values.push(v);
        }
        Ok(tape)
    }

    /// Overwrites a leaf value in `tape` and re-evaluates everything
    /// downstream of it.
    pub fn set_leaf(&self, tape: &mut Tape, params: &ParamStore, leaf: NodeId, value: Matrix) -> Result<()> {
        if !matches!(self.nodes[leaf.0].op, Op::Aux) {
            return Err(Error::Unsupported(format!(
                "set_leaf on {} node",
                self.nodes[leaf.0].op.name()
            )));
        }
        if value.shape() != self.shape(leaf) {
            return Err(Error::Shape(format!(
                "leaf {:?} given {:?}",
                self.shape(leaf),
                value.shape()
            )));
        }
        let mut dirty = vec![false; self.nodes.len()];
        dirty[leaf.0] = true;
        tape.values[leaf.0] = value;
        for i in leaf.0 + 1..self.nodes.len() {
            if self.nodes[i].op.operands().iter().any(|o| dirty[o.0]) {
                dirty[i] = true;
                tape.values[i] = self.eval_node(i, &tape.values, params, &[])?;
            }
        }
        Ok(())
    }

    fn eval_node(&self, i: usize, values: &[Matrix], params: &ParamStore, inputs: &[Matrix]) -> Result<Matrix> {
        let node = &self.nodes[i];
        let v = |n: &NodeId| &values[n.0];
        let out = match &node.op {
            Op::Input(slot) => {
                let m = &inputs[*slot];
                if m.shape() != (node.rows, node.cols) {
                    return Err(Error::Shape(format!(
                        "input slot {slot} declared {}x{}, fed {}x{}",
                        node.rows,
                        node.cols,
                        m.rows(),
                        m.cols()
                    )));
                }
                m.clone()
            }
            Op::Aux | Op::Zeros => Matrix::zeros(node.rows, node.cols),
            Op::Param(id) => {
                let m = params.get(*id);
                if m.shape() != (node.rows, node.cols) {
                    return Err(Error::Shape(format!(
                        "parameter {} is {:?}, graph expects {}x{}",
                        params.name(*id),
                        m.shape(),
                        node.rows,
                        node.cols
                    )));
                }
                m.clone()
            }
            Op::MatMul(a, b) => super::matrix::gemm(v(a), false, v(b), false),
            Op::AddBias(x, b) => {
                let mut out = v(x).clone();
                let bias = v(b).data();
                for r in 0..out.rows() {
                    for (o, bv) in out.row_mut(r).iter_mut().zip(bias) {
                        *o += bv;
                    }
                }
                out
            }
            Op::Relu(x) => v(x).map(|z| if z > 0.0 { z } else { 0.0 }),
            Op::Sigmoid(x) => v(x).map(sigmoid),
            Op::SoftmaxCrossEntropy(x, labels) => {
                let z = v(x);
                let mut total = 0.0;
                for (r, &label) in labels.iter().enumerate() {
                    let row = z.row(r);
                    total += log_sum_exp(row) - row[label];
                }
                Matrix::scalar(total / labels.len() as f64)
            }
            Op::Mean(x) => {
                let m = v(x);
                Matrix::scalar(m.sum() / m.len() as f64)
            }
            Op::RowNorm(x) => {
                let m = v(x);
                let data = (0..m.rows())
                    .map(|r| m.row(r).iter().map(|a| a * a).sum::<f64>().sqrt())
                    .collect();
                Matrix::from_vec_unchecked(m.rows(), 1, data)
            }
            Op::Affine(x, scale, shift) => v(x).map(|z| scale * z + shift),
            Op::Combine(a, wa, b, wb) => v(a).zip_map(v(b), |p, q| wa * p + wb * q),
            Op::Concat(parts) => {
                let mut data = Vec::with_capacity(node.rows * node.cols);
                for r in 0..node.rows {
                    for p in parts {
                        data.extend_from_slice(v(p).row(r));
                    }
                }
                Matrix::from_vec_unchecked(node.rows, node.cols, data)
            }
            Op::Slice(x, start, end) => {
                let m = v(x);
                let mut data = Vec::with_capacity(node.rows * node.cols);
                for r in 0..node.rows {
                    data.extend_from_slice(&m.row(r)[*start..*end]);
                }
                Matrix::from_vec_unchecked(node.rows, node.cols, data)
            }
            Op::Hadamard(a, b) => v(a).zip_map(v(b), |p, q| p * q),
            Op::ReluMask(pre, x) => v(pre).zip_map(v(x), |p, q| if p > 0.0 { q } else { 0.0 }),
        };
        if !out.is_finite() {
            return Err(Error::NonFinite(format!("node {i} ({})", node.op.name())));
        }
        Ok(out)
    }

    /// Gradient of the 1x1 node `output` with respect to each node in `wrt`.
    pub fn grad(&self, tape: &Tape, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Matrix>> {
        if self.shape(output) != (1, 1) {
            return Err(Error::NotScalar(output.0));
        }
        self.backward(tape, output, Matrix::scalar(1.0), wrt)
    }

    /// Gradient of a 1x1 node with respect to stored parameters.
    pub fn grad_params(
        &self,
        tape: &Tape,
        output: NodeId,
        params: &ParamStore,
        wrt: &[ParamId],
    ) -> Result<Vec<Matrix>> {
        let mut nodes = Vec::with_capacity(wrt.len());
        let mut missing = Vec::new();
        for (k, &p) in wrt.iter().enumerate() {
            match self.param_node(p) {
                Some(n) => nodes.push(n),
                None => {
                    if p.0 >= params.len() {
                        return Err(Error::UnknownParam(format!("#{}", p.0)));
                    }
                    missing.push(k);
                }
            }
        }
        let mut found = self.grad(tape, output, &nodes)?.into_iter();
        Ok(wrt
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                if missing.contains(&k) {
                    let (r, c) = params.get(p).shape();
                    Matrix::zeros(r, c)
                } else {
                    found.next().expect("one gradient per present parameter")
                }
            })
            .collect())
    }

    /// Vector-Jacobian product: propagates `seed` (shaped like `output`)
    /// back to each node in `wrt`. Unreached nodes get zero gradients.
    pub fn backward(&self, tape: &Tape, output: NodeId, seed: Matrix, wrt: &[NodeId]) -> Result<Vec<Matrix>> {
        if output.0 >= self.nodes.len() || tape.values.len() != self.nodes.len() {
            return Err(Error::Shape("tape does not belong to this graph".into()));
        }
        if seed.shape() != self.shape(output) {
            return Err(Error::Shape(format!(
                "seed {:?} for node of shape {:?}",
                seed.shape(),
                self.shape(output)
            )));
        }
        for w in wrt {
            if w.0 >= self.nodes.len() {
                return Err(Error::UnknownParam(format!("node {}", w.0)));
            }
        }

        let last = output.0;
        let mut needs = vec![false; last + 1];
        for w in wrt {
            if w.0 <= last {
                needs[w.0] = true;
            }
        }
        for i in 0..=last {
            if !needs[i] && self.nodes[i].op.operands().iter().any(|o| needs[o.0]) {
                needs[i] = true;
            }
        }

        let mut results: Vec<Option<Matrix>> = vec![None; wrt.len()];
        let mut adj: Vec<Option<Matrix>> = vec![None; last + 1];
        if needs[last] {
            adj[last] = Some(seed);
        }

        for i in (0..=last).rev() {
            let Some(g) = adj[i].take() else { continue };
            for (k, w) in wrt.iter().enumerate() {
                if w.0 == i {
                    results[k] = Some(g.clone());
                }
            }
            self.propagate(i, &g, tape, &needs, &mut adj);
        }

        Ok(wrt
            .iter()
            .zip(results)
            .map(|(w, r)| {
                r.unwrap_or_else(|| {
                    let (rows, cols) = self.shape(*w);
                    Matrix::zeros(rows, cols)
                })
            })
            .collect())
    }

    fn propagate(&self, i: usize, g: &Matrix, tape: &Tape, needs: &[bool], adj: &mut [Option<Matrix>]) {
        let val = |n: &NodeId| &tape.values[n.0];
        let mut send = |n: NodeId, m: Matrix| {
            if needs[n.0] {
                accumulate(&mut adj[n.0], m);
            }
        };
        match &self.nodes[i].op {
            Op::Input(_) | Op::Aux | Op::Param(_) | Op::Zeros => {}
            Op::MatMul(a, b) => {
                if needs[a.0] {
                    send(*a, super::matrix::gemm(g, false, val(b), true));
                }
                if needs[b.0] {
                    send(*b, super::matrix::gemm(val(a), true, g, false));
                }
            }
            Op::AddBias(x, b) => {
                send(*x, g.clone());
                if needs[b.0] {
                    let mut sums = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (s, v) in sums.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    send(*b, Matrix::from_vec_unchecked(1, g.cols(), sums));
                }
            }
            Op::Relu(x) => send(*x, val(x).zip_map(g, |z, gv| if z > 0.0 { gv } else { 0.0 })),
            Op::Sigmoid(x) => {
                let s = &tape.values[i];
                send(*x, s.zip_map(g, |sv, gv| gv * sv * (1.0 - sv)));
            }
            Op::SoftmaxCrossEntropy(x, labels) => {
                let z = val(x);
                let scale = g.data()[0] / labels.len() as f64;
                let mut out = Matrix::zeros(z.rows(), z.cols());
                for (r, &label) in labels.iter().enumerate() {
                    let row = z.row(r);
                    let lse = log_sum_exp(row);
                    for (o, &zv) in out.row_mut(r).iter_mut().zip(row) {
                        *o = scale * (zv - lse).exp();
                    }
                    out.row_mut(r)[label] -= scale;
                }
                send(*x, out);
            }
            Op::Mean(x) => {
                let (r, c) = self.shape(*x);
                send(*x, Matrix::filled(r, c, g.data()[0] / (r * c) as f64));
            }
            Op::RowNorm(x) => {
                let m = val(x);
                let norms = &tape.values[i];
                let mut out = Matrix::zeros(m.rows(), m.cols());
                for r in 0..m.rows() {
                    let n = norms.data()[r];
                    if n > 0.0 {
                        let f = g.data()[r] / n;
                        for (o, v) in out.row_mut(r).iter_mut().zip(m.row(r)) {
                            *o = f * v;
                        }
                    }
                }
                send(*x, out);
            }
            Op::Affine(x, scale, _) => send(*x, g.map(|v| scale * v)),
            Op::Combine(a, wa, b, wb) => {
                send(*a, g.map(|v| wa * v));
                send(*b, g.map(|v| wb * v));
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let (rows, cols) = self.shape(*p);
                    if needs[p.0] {
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[start..start + cols]);
                        }
                        send(*p, Matrix::from_vec_unchecked(rows, cols, data));
                    }
                    start += cols;
                }
            }
            Op::Slice(x, start, end) => {
                let (rows, cols) = self.shape(*x);
                let mut out = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    out.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                }
                send(*x, out);
            }
            Op::Hadamard(a, b) => {
                if needs[a.0] {
                    send(*a, g.zip_map(val(b), |p, q| p * q));
                }
                if needs[b.0] {
                    send(*b, g.zip_map(val(a), |p, q| p * q));
                }
            }
            Op::ReluMask(pre, x) => {
                send(*x, val(pre).zip_map(g, |p, gv| if p > 0.0 { gv } else { 0.0 }));
            }
        }
    }

    /// Appends the forward-mode tangent of `target` along direction
    /// `tangent` placed on node `seed` (every other leaf has zero tangent).
    /// Returns the node holding the tangent of `target`.
    pub fn jvp(&mut self, seed: NodeId, tangent: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(seed) != self.shape(tangent) {
            return Err(Error::Shape(format!(
                "tangent {:?} for seed {:?}",
                self.shape(tangent),
                self.shape(seed)
            )));
        }
        let mut dot: Vec<Option<NodeId>> = vec![None; target.0 + 1];
        dot[seed.0] = Some(tangent);
        for i in seed.0 + 1..=target.0 {
            let op = self.nodes[i].op.clone();
            let this = NodeId(i);
            let d = |n: &NodeId| dot[n.0];
            let t = match op {
                Op::Input(_) | Op::Aux | Op::Param(_) | Op::Zeros => None,
                Op::MatMul(a, b) => {
                    let left = match d(&a) {
                        Some(da) => Some(self.matmul(da, b)?),
                        None => None,
                    };
                    let right = match d(&b) {
                        Some(db) => Some(self.matmul(a, db)?),
                        None => None,
                    };
                    self.sum_opt(left, right)?
                }
                Op::AddBias(x, b) => {
                    if d(&b).is_some() {
                        return Err(Error::Unsupported("tangent through a bias".into()));
                    }
                    d(&x)
                }
                Op::Relu(x) => match d(&x) {
                    Some(dx) => Some(self.relu_mask(x, dx)?),
                    None => None,
                },
                Op::Sigmoid(x) => match d(&x) {
                    Some(dx) => {
                        let one_minus = self.affine(this, -1.0, 1.0);
                        let slope = self.hadamard(this, one_minus)?;
                        Some(self.hadamard(slope, dx)?)
                    }
                    None => None,
                },
                Op::Mean(x) => d(&x).map(|dx| self.mean(dx)),
                Op::SoftmaxCrossEntropy(x, _) | Op::RowNorm(x) => {
                    if d(&x).is_some() {
                        return Err(Error::Unsupported(format!(
                            "tangent through {}",
                            self.nodes[i].op.name()
                        )));
                    }
                    None
                }
                Op::Affine(x, scale, _) => d(&x).map(|dx| self.affine(dx, scale, 0.0)),
                Op::Combine(a, wa, b, wb) => {
                    let left = d(&a).map(|da| self.affine(da, wa, 0.0));
                    let right = d(&b).map(|db| self.affine(db, wb, 0.0));
                    self.sum_opt(left, right)?
                }
                Op::Concat(parts) => {
                    if parts.iter().any(|p| d(p).is_some()) {
                        let mut pieces = Vec::with_capacity(parts.len());
                        for p in &parts {
                            let piece = match d(p) {
                                Some(dp) => dp,
                                None => {
                                    let (r, c) = self.shape(*p);
                                    self.zeros(r, c)
                                }
                            };
                            pieces.push(piece);
                        }
                        Some(self.concat(&pieces)?)
                    } else {
                        None
                    }
                }
                Op::Slice(x, s, e) => match d(&x) {
                    Some(dx) => Some(self.slice(dx, s, e)?),
                    None => None,
                },
                Op::Hadamard(a, b) => {
                    let left = match d(&a) {
                        Some(da) => Some(self.hadamard(da, b)?),
                        None => None,
                    };
                    let right = match d(&b) {
                        Some(db) => Some(self.hadamard(a, db)?),
                        None => None,
                    };
                    self.sum_opt(left, right)?
                }
                Op::ReluMask(pre, x) => match d(&x) {
                    Some(dx) => Some(self.relu_mask(pre, dx)?),
                    None => None,
                },
            };
            dot[i] = t;
        }
        match dot[target.0] {
            Some(t) => Ok(t),
            None => {
                let (r, c) = self.shape(target);
                Ok(self.zeros(r, c))
            }
        }
    }

    fn sum_opt(&mut self, a: Option<NodeId>, b: Option<NodeId>) -> Result<Option<NodeId>> {
        Ok(match (a, b) {
            (Some(a), Some(b)) => Some(self.combine(a, 1.0, b, 1.0)?),
            (a, None) => a,
            (None, b) => b,
        })
    }
}

fn accumulate(slot: &mut Option<Matrix>, m: Matrix) {
    match slot {
        Some(acc) => acc.add_scaled(&m, 1.0),
        None => *slot = Some(m),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn relu_and_sigmoid_forward() {
        let mut g = Graph::new();
        let x = g.input(1, 3);
        let r = g.relu(x);
        let s = g.sigmoid(x);
        let tape = g.forward(&ParamStore::new(), &[m(1, 3, &[-1.0, 0.0, 2.0])]).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(tape.value(s).data()[1], 0.5);
    }

    #[test]
    fn elementary_derivatives() {
        let mut g = Graph::new();
        let x = g.input(1, 1);
        let s = g.sigmoid(x);
        let out = g.mean(s);
        let tape = g.forward(&ParamStore::new(), &[m(1, 1, &[0.0])]).unwrap();
        assert_eq!(g.grad(&tape, out, &[x]).unwrap()[0].item(), Some(0.25));

        let mut g = Graph::new();
        let x = g.input(1, 1);
        let r = g.relu(x);
        let out = g.mean(r);
        let tape = g.forward(&ParamStore::new(), &[m(1, 1, &[-1.0])]).unwrap();
        assert_eq!(g.grad(&tape, out, &[x]).unwrap()[0].item(), Some(0.0));
        // Subgradient at the kink is zero.
        let tape = g.forward(&ParamStore::new(), &[m(1, 1, &[0.0])]).unwrap();
        assert_eq!(g.grad(&tape, out, &[x]).unwrap()[0].item(), Some(0.0));
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.input(2, 3);
        let b = g.input(2, 3);
        assert!(matches!(g.matmul(a, b), Err(Error::Shape(_))));
        assert!(g.softmax_cross_entropy(a, &[0]).is_err());
        assert!(g.softmax_cross_entropy(a, &[0, 3]).is_err());
        let err = g.forward(&ParamStore::new(), &[Matrix::zeros(2, 3)]);
        assert!(matches!(err, Err(Error::Shape(_))));
        let err = g.forward(&ParamStore::new(), &[Matrix::zeros(2, 3), Matrix::zeros(3, 2)]);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn grad_requires_scalar_output() {
        let mut g = Graph::new();
        let x = g.input(1, 2);
        let r = g.relu(x);
        let tape = g.forward(&ParamStore::new(), &[m(1, 2, &[1.0, 2.0])]).unwrap();
        assert!(matches!(g.grad(&tape, r, &[x]), Err(Error::NotScalar(_))));
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(1, 1);
        let y = g.affine(x, 1e308, 0.0);
        let _ = g.affine(y, 10.0, 0.0);
        let err = g.forward(&ParamStore::new(), &[m(1, 1, &[10.0])]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut store = ParamStore::new();
        let a = store.insert("a", m(1, 1, &[2.0])).unwrap();
        let b = store.insert("b", m(1, 1, &[5.0])).unwrap();
        let mut g = Graph::new();
        let x = g.input(1, 1);
        let pa = g.param(&store, a);
        let y = g.matmul(x, pa).unwrap();
        let out = g.mean(y);
        let tape = g.forward(&store, &[m(1, 1, &[3.0])]).unwrap();
        let grads = g.grad_params(&tape, out, &store, &[a, b]).unwrap();
        assert_eq!(grads[0].item(), Some(3.0));
        assert_eq!(grads[1].item(), Some(0.0));
    }

    #[test]
    fn softmax_cross_entropy_value() {
        let mut g = Graph::new();
        let z = g.input(1, 4);
        let ce = g.softmax_cross_entropy(z, &[2]).unwrap();
        let tape = g.forward(&ParamStore::new(), &[Matrix::zeros(1, 4)]).unwrap();
        assert!((tape.scalar(ce).unwrap() - 4f64.ln()).abs() < 1e-15);
        let grad = g.grad(&tape, ce, &[z]).unwrap();
        assert_eq!(grad[0].data(), &[0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn jvp_through_sigmoid_matches_derivative() {
        let mut g = Graph::new();
        let x = g.input(1, 2);
        let s = g.sigmoid(x);
        let t = g.aux(1, 2);
        let ds = g.jvp(x, t, s).unwrap();
        let store = ParamStore::new();
        let mut tape = g.forward(&store, &[m(1, 2, &[0.0, 1.0])]).unwrap();
        g.set_leaf(&mut tape, &store, t, m(1, 2, &[1.0, 2.0])).unwrap();
        let s1 = sigmoid(1.0);
        assert_eq!(tape.value(ds).data()[0], 0.25);
        assert!((tape.value(ds).data()[1] - 2.0 * s1 * (1.0 - s1)).abs() < 1e-15);
    }
}
