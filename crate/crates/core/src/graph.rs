//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! A [`Graph`] is a tape rebuilt per minibatch: builder methods append nodes
//! whose parents already exist, so reverse iteration over the node list is a
//! reverse topological order and the backward pass visits each node exactly
//! once. Constants (inputs, targets) are leaves that do not receive
//! gradients; parameters are leaves that do.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::survival::cox::CoxLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    /// row-broadcast add of a 1 x n bias
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    MulElem(NodeId, NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    Square(NodeId),
    Ln(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    ConcatCols(Vec<NodeId>),
    /// mean over consecutive row groups of the given size
    MeanRowsGrouped(NodeId, usize),
    MeanAll(NodeId),
    SumAll(NodeId),
    /// mean binary cross entropy of a logit column against fixed targets
    BceWithLogits(NodeId, Matrix),
    /// negative weighted Cox log partial likelihood divided by record count
    CoxNegLogPl(NodeId, Box<CoxLayout>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every grad-tracked node.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `id`; zero matrix if the node never received one.
    pub fn get(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Matrix::zeros(shape.0, shape.1),
        }
    }

    pub fn get_ref(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }
}

fn softplus(x: f64) -> f64 {
    // stable: ln(1 + e^x) = max(x, 0) + ln(1 + e^{-|x|})
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value produced by graph op");
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, targets, fixed tensors).
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Matmul(a, b), ng)
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        assert_eq!(self.value(bias).shape(), (1, n), "bias must be 1 x cols");
        let mut v = self.value(a).clone();
        let b = self.value(bias).clone();
        for i in 0..m {
            for j in 0..n {
                v.set(i, j, v.get(i, j) + b.get(0, j));
            }
        }
        let ng = self.needs(a) || self.needs(bias);
        self.push(v, Op::AddBias(a, bias), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).sub(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MulElem(a, b), ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(softplus);
        let ng = self.needs(a);
        self.push(v, Op::Softplus(a), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        let ng = self.needs(a);
        self.push(v, Op::Square(a), ng)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        let ng = self.needs(a);
        self.push(v, Op::Ln(a), ng)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        let ng = self.needs(a);
        self.push(v, Op::AddScalar(a, c), ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(m, total);
        let mut off = 0;
        for &p in parts {
            let pm = self.value(p);
            assert_eq!(pm.rows(), m, "concat_cols row mismatch");
            for i in 0..m {
                let dst = i * total + off;
                let src = pm.row(i);
                v.data_mut()[dst..dst + src.len()].copy_from_slice(src);
            }
            off += pm.cols();
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn mean_rows_grouped(&mut self, a: NodeId, group: usize) -> NodeId {
        let (m, n) = self.value(a).shape();
        assert!(group > 0 && m % group == 0, "rows {} not divisible by group {}", m, group);
        let out_rows = m / group;
        let mut v = Matrix::zeros(out_rows, n);
        let src = self.value(a).data();
        for g in 0..out_rows {
            for r in 0..group {
                let row = &src[(g * group + r) * n..(g * group + r + 1) * n];
                for j in 0..n {
                    v.data_mut()[g * n + j] += row[j];
                }
            }
        }
        let inv = 1.0 / group as f64;
        v.data_mut().iter_mut().for_each(|x| *x *= inv);
        let ng = self.needs(a);
        self.push(v, Op::MeanRowsGrouped(a, group), ng)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        let v = Matrix::from_vec(1, 1, vec![s / self.value(a).len() as f64]).unwrap();
        let ng = self.needs(a);
        self.push(v, Op::MeanAll(a), ng)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        let v = Matrix::from_vec(1, 1, vec![s]).unwrap();
        let ng = self.needs(a);
        self.push(v, Op::SumAll(a), ng)
    }

    /// Mean binary cross entropy between a logit column and 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: Matrix) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.shape(), targets.shape(), "bce shape mismatch");
        let m = lv.len() as f64;
        let mut total = 0.0;
        for (&l, &t) in lv.data().iter().zip(targets.data().iter()) {
            total += softplus(l) - t * l;
        }
        let v = Matrix::from_vec(1, 1, vec![total / m]).unwrap();
        let ng = self.needs(logits);
        self.push(v, Op::BceWithLogits(logits, targets), ng)
    }

    /// Negative weighted Cox log partial likelihood of a risk-score column,
    /// divided by the number of records.
    pub fn cox_neg_log_pl(&mut self, rho: NodeId, layout: CoxLayout) -> Result<NodeId> {
        let rv = self.value(rho);
        if rv.cols() != 1 || rv.rows() != layout.n() {
            return Err(Error::Dimension("risk scores must be an n x 1 column".into()));
        }
        let ll = layout.log_partial_likelihood(rv.data())?;
        let v = Matrix::from_vec(1, 1, vec![-ll / layout.n() as f64]).unwrap();
        let ng = self.needs(rho);
        Ok(self.push(v, Op::CoxNegLogPl(rho, Box::new(layout)), ng))
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Matmul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul_nt(self.value(*b));
                        accumulate(&mut grads, a.0, da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).matmul_tn(&g);
                        accumulate(&mut grads, b.0, db);
                    }
                }
                Op::AddBias(a, bias) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, a.0, g.clone());
                    }
                    if self.needs(*bias) {
                        let (m, n) = g.shape();
                        let mut db = Matrix::zeros(1, n);
                        for i in 0..m {
                            for j in 0..n {
                                db.set(0, j, db.get(0, j) + g.get(i, j));
                            }
                        }
                        accumulate(&mut grads, bias.0, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, a.0, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, b.0, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, a.0, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, b.0, g.scale(-1.0));
                    }
                }
                Op::MulElem(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, a.0, g.zip_map(self.value(*b), |gv, bv| gv * bv));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, b.0, g.zip_map(self.value(*a), |gv, av| gv * av));
                    }
                }
                Op::Relu(a) => {
                    let da = g.zip_map(self.value(*a), |gv, av| if av > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, a.0, da);
                }
                Op::Softplus(a) => {
                    let da = g.zip_map(self.value(*a), |gv, av| gv * sigmoid(av));
                    accumulate(&mut grads, a.0, da);
                }
                Op::Sigmoid(a) => {
                    let da = g.zip_map(&self.nodes[idx].value, |gv, sv| gv * sv * (1.0 - sv));
                    accumulate(&mut grads, a.0, da);
                }
                Op::Square(a) => {
                    let da = g.zip_map(self.value(*a), |gv, av| 2.0 * av * gv);
                    accumulate(&mut grads, a.0, da);
                }
                Op::Ln(a) => {
                    let da = g.zip_map(self.value(*a), |gv, av| gv / av);
                    accumulate(&mut grads, a.0, da);
                }
                Op::Scale(a, c) => {
                    accumulate(&mut grads, a.0, g.scale(*c));
                }
                Op::AddScalar(a, _) => {
                    accumulate(&mut grads, a.0, g.clone());
                }
                Op::ConcatCols(parts) => {
                    let m = g.rows();
                    let total = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        if self.needs(p) {
                            let mut dp = Matrix::zeros(m, pc);
                            for i in 0..m {
                                for j in 0..pc {
                                    dp.set(i, j, g.get(i, j + off));
                                }
                            }
                            accumulate(&mut grads, p.0, dp);
                        }
                        off += pc;
                    }
                }
                Op::MeanRowsGrouped(a, group) => {
                    let (m, n) = self.value(*a).shape();
                    let inv = 1.0 / *group as f64;
                    let mut da = Matrix::zeros(m, n);
                    for i in 0..m {
                        let src = g.row(i / group);
                        let dst = &mut da.data_mut()[i * n..(i + 1) * n];
                        for j in 0..n {
                            dst[j] = src[j] * inv;
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::MeanAll(a) => {
                    let (m, n) = self.value(*a).shape();
                    let gv = g.get(0, 0) / (m * n) as f64;
                    accumulate(&mut grads, a.0, Matrix::from_fn(m, n, |_, _| gv));
                }
                Op::SumAll(a) => {
                    let (m, n) = self.value(*a).shape();
                    let gv = g.get(0, 0);
                    accumulate(&mut grads, a.0, Matrix::from_fn(m, n, |_, _| gv));
                }
                Op::BceWithLogits(a, targets) => {
                    let m = targets.len() as f64;
                    let gv = g.get(0, 0);
                    let da = self
                        .value(*a)
                        .zip_map(targets, |l, t| gv * (sigmoid(l) - t) / m);
                    accumulate(&mut grads, a.0, da);
                }
                Op::CoxNegLogPl(a, layout) => {
                    let rho = self.value(*a).data();
                    let (_, gll) = layout
                        .log_partial_likelihood_grad(rho)
                        .expect("layout validated at construction");
                    let gv = g.get(0, 0);
                    let scale = -gv / layout.n() as f64;
                    let da = Matrix::col_vector(gll.iter().map(|v| v * scale).collect());
                    accumulate(&mut grads, a.0, da);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut Vec<Option<Matrix>>, idx: usize, delta: Matrix) {
    match &mut grads[idx] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}
