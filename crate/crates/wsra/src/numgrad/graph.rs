//! Reverse-mode differentiation over a per-step expression graph.
//!
//! Nodes are appended in evaluation order, so the vector index order is
//! already topological; `backward` walks it once in reverse.

use crate::error::{Result, WsraError};

use super::tensor::Param;

/// Handle to one node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

const NORM_EPS: f64 = 1e-12;

#[derive(Debug)]
enum Op {
    /// Constant input, no gradient destination.
    Const,
    /// Leaf bound to an external parameter; backward accumulates into it.
    Leaf(Param),
    Concat(NodeId, NodeId),
    /// y = W x + b with W: [out, in], b: [out].
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Sigmoid(NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Exp(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, f64),
    AddConst(NodeId),
    /// Scalar node times vector node.
    ScaleVec { s: NodeId, v: NodeId },
    Sum(NodeId),
    Mean(NodeId),
    Dot(NodeId, NodeId),
    L2Norm(NodeId),
    Cosine(NodeId, NodeId),
    Stack(Vec<NodeId>),
    Index(NodeId, usize),
    /// y = log(1 + sum_i exp(z_i)), computed with max subtraction.
    Log1pSumExp(NodeId),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// One expression graph; build forward, call [`Graph::backward`] once, drop.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Scalar value of a single-element node.
    pub fn value(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, shape, values });
        NodeId(self.nodes.len() - 1)
    }

    fn numel(&self, id: NodeId) -> usize {
        self.nodes[id.0].values.len()
    }

    fn shape_err(&self, op: &str, details: String) -> WsraError {
        WsraError::Shape { op: op.into(), details }
    }

    // ---- leaves ----

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(self.shape_err("constant", format!("shape {:?} vs {} values", shape, values.len())));
        }
        Ok(self.push(Op::Const, shape, values))
    }

    pub fn constant_vector(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Const, vec![values.len()], values.to_vec())
    }

    pub fn constant_scalar(&mut self, x: f64) -> NodeId {
        self.push(Op::Const, vec![1], vec![x])
    }

    /// Bind an external parameter as a leaf; values are snapshotted now.
    pub fn leaf(&mut self, param: &Param) -> NodeId {
        let (shape, values) = {
            let t = param.borrow();
            (t.shape.clone(), t.values.clone())
        };
        self.push(Op::Leaf(param.clone()), shape, values)
    }

    // ---- primitives ----

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a).len() != 1 || self.shape(b).len() != 1 {
            return Err(self.shape_err(
                "concat",
                format!("expected vectors, got {:?} and {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut values = self.nodes[a.0].values.clone();
        values.extend_from_slice(&self.nodes[b.0].values);
        let n = values.len();
        Ok(self.push(Op::Concat(a, b), vec![n], values))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 {
            return Err(self.shape_err("affine", format!("W must be 2-d, got {:?}", ws)));
        }
        let (out, inn) = (ws[0], ws[1]);
        if self.numel(x) != inn || self.numel(b) != out {
            return Err(self.shape_err(
                "affine",
                format!(
                    "W {:?} expects x of {} and b of {}, got x {:?}, b {:?}",
                    ws,
                    inn,
                    out,
                    self.shape(x),
                    self.shape(b)
                ),
            ));
        }
        let mut values = vec![0.0; out];
        {
            let wv = &self.nodes[w.0].values;
            let xv = &self.nodes[x.0].values;
            let bv = &self.nodes[b.0].values;
            for o in 0..out {
                let mut acc = 0.0;
                for i in 0..inn {
                    acc += wv[o * inn + i] * xv[i];
                }
                values[o] = acc + bv[o];
            }
        }
        Ok(self.push(Op::Affine { x, w, b }, vec![out], values))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| sigmoid(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Sigmoid(x), shape, values)
    }

    /// Softmax over a vector node, with max subtraction.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() != 1 || self.numel(x) == 0 {
            return Err(self.shape_err("softmax", format!("expected nonempty vector, got {:?}", self.shape(x))));
        }
        let xv = &self.nodes[x.0].values;
        let m = xv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xv.iter().map(|&v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let values: Vec<f64> = exps.iter().map(|&e| e / z).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Op::Softmax(x), shape, values))
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.ln()).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Log(x), shape, values)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v.exp()).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::Exp(x), shape, values)
    }

    fn binary_same_shape(&mut self, op_name: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(
                op_name,
                format!("operand shapes differ: {:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b)?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Add(a, b), shape, values))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b)?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Sub(a, b), shape, values))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b)?;
        let values: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Op::Mul(a, b), shape, values))
    }

    pub fn scalar_mul(&mut self, x: NodeId, c: f64) -> NodeId {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| c * v).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::ScalarMul(x, c), shape, values)
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let values: Vec<f64> = self.nodes[x.0].values.iter().map(|&v| v + c).collect();
        let shape = self.shape(x).to_vec();
        self.push(Op::AddConst(x), shape, values)
    }

    /// Scalar node `s` times vector node `v`.
    pub fn scale_vec(&mut self, s: NodeId, v: NodeId) -> Result<NodeId> {
        if self.numel(s) != 1 {
            return Err(self.shape_err("scale_vec", format!("scale must be scalar, got {:?}", self.shape(s))));
        }
        let sv = self.nodes[s.0].values[0];
        let values: Vec<f64> = self.nodes[v.0].values.iter().map(|&x| sv * x).collect();
        let shape = self.shape(v).to_vec();
        Ok(self.push(Op::ScaleVec { s, v }, shape, values))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].values.iter().sum();
        self.push(Op::Sum(x), vec![1], vec![s])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.numel(x);
        if n == 0 {
            return Err(self.shape_err("mean", "empty input".into()));
        }
        let s: f64 = self.nodes[x.0].values.iter().sum();
        Ok(self.push(Op::Mean(x), vec![1], vec![s / n as f64]))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("dot", a, b)?;
        let s: f64 = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Op::Dot(a, b), vec![1], vec![s]))
    }

    pub fn l2_norm(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].values.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push(Op::L2Norm(x), vec![1], vec![s])
    }

    /// Cosine similarity of two vectors, with epsilon-guarded norms.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("cosine", a, b)?;
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let na: f64 = av.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na < NORM_EPS || nb < NORM_EPS {
            return Err(WsraError::DegenerateVector { op: "cosine".into() });
        }
        let d: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        Ok(self.push(Op::Cosine(a, b), vec![1], vec![d / (na * nb)]))
    }

    /// Stack scalar nodes into one vector node.
    pub fn stack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(self.shape_err("stack", "no inputs".into()));
        }
        let mut values = Vec::with_capacity(parts.len());
        for &p in parts {
            if self.numel(p) != 1 {
                return Err(self.shape_err("stack", format!("inputs must be scalars, got {:?}", self.shape(p))));
            }
            values.push(self.nodes[p.0].values[0]);
        }
        let n = values.len();
        Ok(self.push(Op::Stack(parts.to_vec()), vec![n], values))
    }

    /// Extract element `i` of a vector node as a scalar node.
    pub fn index(&mut self, x: NodeId, i: usize) -> Result<NodeId> {
        if i >= self.numel(x) {
            return Err(self.shape_err("index", format!("index {} out of bounds for {:?}", i, self.shape(x))));
        }
        let v = self.nodes[x.0].values[i];
        Ok(self.push(Op::Index(x, i), vec![1], vec![v]))
    }

    /// log(1 + sum_i exp(z_i)) over a vector of exponents, max-subtracted.
    pub fn log1p_sum_exp(&mut self, z: NodeId) -> Result<NodeId> {
        if self.shape(z).len() != 1 || self.numel(z) == 0 {
            return Err(self.shape_err("log1p_sum_exp", format!("expected nonempty vector, got {:?}", self.shape(z))));
        }
        let zv = &self.nodes[z.0].values;
        let m = zv.iter().cloned().fold(0.0_f64, f64::max);
        let s: f64 = (-m).exp() + zv.iter().map(|&v| (v - m).exp()).sum::<f64>();
        Ok(self.push(Op::Log1pSumExp(z), vec![1], vec![m + s.ln()]))
    }

    // ---- backward ----

    /// Populate gradients of every bound parameter with d(loss)/d(param).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(self.shape_err("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..self.nodes.len()).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            // split borrow: read node, write upstream grads
            let (head, tail) = self.nodes.split_at(id);
            let node = &tail[0];
            let mut acc = |target: NodeId, contribution: Vec<f64>| {
                debug_assert!(target.0 < id);
                let slot = grads[target.0].get_or_insert_with(|| vec![0.0; head[target.0].values.len()]);
                for (s, c) in slot.iter_mut().zip(&contribution) {
                    *s += c;
                }
            };
            match &node.op {
                Op::Const => {}
                Op::Leaf(param) => {
                    let mut t = param.borrow_mut();
                    if t.requires_grad {
                        t.accumulate_grad(&g);
                    }
                }
                Op::Concat(a, b) => {
                    let na = head[a.0].values.len();
                    acc(*a, g[..na].to_vec());
                    acc(*b, g[na..].to_vec());
                }
                Op::Affine { x, w, b } => {
                    let wv = &head[w.0].values;
                    let xv = &head[x.0].values;
                    let out = head[b.0].values.len();
                    let inn = xv.len();
                    let mut gx = vec![0.0; inn];
                    let mut gw = vec![0.0; out * inn];
                    for o in 0..out {
                        let go = g[o];
                        for i in 0..inn {
                            gx[i] += go * wv[o * inn + i];
                            gw[o * inn + i] = go * xv[i];
                        }
                    }
                    acc(*x, gx);
                    acc(*w, gw);
                    acc(*b, g.clone());
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<f64> = node
                        .values
                        .iter()
                        .zip(&g)
                        .map(|(&y, &go)| go * y * (1.0 - y))
                        .collect();
                    acc(*x, gx);
                }
                Op::Softmax(x) => {
                    let y = &node.values;
                    let dot: f64 = y.iter().zip(&g).map(|(&yi, &gi)| yi * gi).sum();
                    let gx: Vec<f64> = y.iter().zip(&g).map(|(&yi, &gi)| yi * (gi - dot)).collect();
                    acc(*x, gx);
                }
                Op::Log(x) => {
                    let gx: Vec<f64> = head[x.0].values.iter().zip(&g).map(|(&xv, &go)| go / xv).collect();
                    acc(*x, gx);
                }
                Op::Exp(x) => {
                    let gx: Vec<f64> = node.values.iter().zip(&g).map(|(&y, &go)| go * y).collect();
                    acc(*x, gx);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.iter().map(|x| -x).collect());
                }
                Op::Mul(a, b) => {
                    let ga: Vec<f64> = head[b.0].values.iter().zip(&g).map(|(&bv, &go)| go * bv).collect();
                    let gb: Vec<f64> = head[a.0].values.iter().zip(&g).map(|(&av, &go)| go * av).collect();
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::ScalarMul(x, c) => {
                    acc(*x, g.iter().map(|go| go * c).collect());
                }
                Op::AddConst(x) => {
                    acc(*x, g.clone());
                }
                Op::ScaleVec { s, v } => {
                    let sv = head[s.0].values[0];
                    let gv: Vec<f64> = g.iter().map(|go| go * sv).collect();
                    let gs: f64 = head[v.0].values.iter().zip(&g).map(|(&vv, &go)| vv * go).sum();
                    acc(*v, gv);
                    acc(*s, vec![gs]);
                }
                Op::Sum(x) => {
                    let n = head[x.0].values.len();
                    acc(*x, vec![g[0]; n]);
                }
                Op::Mean(x) => {
                    let n = head[x.0].values.len();
                    acc(*x, vec![g[0] / n as f64; n]);
                }
                Op::Dot(a, b) => {
                    let go = g[0];
                    acc(*a, head[b.0].values.iter().map(|&bv| go * bv).collect());
                    acc(*b, head[a.0].values.iter().map(|&av| go * av).collect());
                }
                Op::L2Norm(x) => {
                    let y = node.values[0].max(NORM_EPS);
                    let go = g[0];
                    acc(*x, head[x.0].values.iter().map(|&xv| go * xv / y).collect());
                }
                Op::Cosine(a, b) => {
                    let av = &head[a.0].values;
                    let bv = &head[b.0].values;
                    let na: f64 = av.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let nb: f64 = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let c = node.values[0];
                    let go = g[0];
                    let ga: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .map(|(&ai, &bi)| go * (bi / (na * nb) - c * ai / (na * na)))
                        .collect();
                    let gb: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .map(|(&ai, &bi)| go * (ai / (na * nb) - c * bi / (nb * nb)))
                        .collect();
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Stack(parts) => {
                    for (k, &p) in parts.iter().enumerate() {
                        acc(p, vec![g[k]]);
                    }
                }
                Op::Index(x, i) => {
                    let mut gx = vec![0.0; head[x.0].values.len()];
                    gx[*i] = g[0];
                    acc(*x, gx);
                }
                Op::Log1pSumExp(z) => {
                    let y = node.values[0];
                    let go = g[0];
                    // d/dz_i = exp(z_i - y), stable since z_i <= y
                    let gz: Vec<f64> = head[z.0].values.iter().map(|&zi| go * (zi - y).exp()).collect();
                    acc(*z, gz);
                }
            }
        }
        Ok(())
    }
}
