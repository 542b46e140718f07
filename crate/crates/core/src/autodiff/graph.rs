use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded at a graph node.
#[derive(Debug, Clone)]
pub enum Op {
    /// Input bound at evaluation time.
    Leaf,
    /// Fixed value stored in the graph; receives no gradient.
    Constant(Tensor),
    Add(NodeId, NodeId),
    /// Element-wise product of equally shaped tensors.
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Relu(NodeId),
    /// Softmax over the last axis.
    Softmax(NodeId),
    /// Selects rows of a rank-2 table: output `[indices.len(), cols]`.
    Gather {
        table: NodeId,
        indices: Vec<usize>,
    },
    Scale(NodeId, f64),
    /// Mean over every element, producing a scalar.
    Mean(NodeId),
    Reshape(NodeId, Vec<usize>),
    Transpose(NodeId),
    /// Negative log-softmax of `logits` at `target`.
    CrossEntropy {
        logits: NodeId,
        target: usize,
    },
}

impl Op {
    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf | Op::Constant(_) => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Relu(a)
            | Op::Softmax(a)
            | Op::Scale(a, _)
            | Op::Mean(a)
            | Op::Reshape(a, _)
            | Op::Transpose(a) => vec![*a],
            Op::Gather { table, .. } => vec![*table],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    name: Option<String>,
}

/// Immutable computation graph. Node order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Incrementally records operations; every node's parents precede it.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let next = self.nodes.len();
        assert!(
            op.parents().iter().all(|p| p.0 < next),
            "operands must be recorded before node {next}"
        );
        self.nodes.push(Node { op, name: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, name: impl Into<String>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            name: Some(name.into()),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant(value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Softmax(a))
    }

    pub fn gather(&mut self, table: NodeId, indices: Vec<usize>) -> NodeId {
        self.push(Op::Gather { table, indices })
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.push(Op::Scale(a, factor))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> NodeId {
        self.push(Op::Reshape(a, shape))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Transpose(a))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        self.push(Op::CrossEntropy { logits, target })
    }

    pub fn build(self) -> Graph {
        Graph { nodes: self.nodes }
    }
}

/// Leaf values for one evaluation.
pub type Bindings<'a> = HashMap<NodeId, &'a Tensor>;

/// Values of every node after a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    values: Vec<Tensor>,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gradients of a scalar output with respect to every leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    by_leaf: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn take(&mut self, leaf: NodeId) -> Option<Tensor> {
        self.by_leaf.remove(&leaf)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.by_leaf.iter()
    }
}

/// How softmax nodes are treated by the rescale backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SoftmaxRescale {
    /// Each output element uses Δout/Δin against its own pre-activation element.
    #[default]
    Diagonal,
    /// Softmax is back-propagated with its true Jacobian.
    Gradient,
}

/// Settings for [`Graph::backward_rescale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleOptions {
    /// Below this |Δinput| the true local derivative is used.
    pub threshold: f64,
    pub softmax: SoftmaxRescale,
}

impl Default for RescaleOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-7,
            softmax: SoftmaxRescale::Diagonal,
        }
    }
}

enum Mode<'r> {
    Gradient,
    Rescale {
        reference: &'r Evaluation,
        options: RescaleOptions,
    },
}

impl Graph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn name(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.0].name.as_deref()
    }

    /// Every node id, in topological order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Nodes whose value feeds a ReLU; their sign pattern marks the kinks of
    /// the function.
    pub fn relu_inputs(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, _)| NodeId(i))
    }

    pub fn leaf_by_name(&self, name: &str) -> Option<NodeId> {
        self.leaves().find(|&id| self.name(id) == Some(name))
    }

    pub fn forward(&self, bindings: &Bindings<'_>) -> Result<Evaluation> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let shape_err = |message: String| Error::Shape { node: i, message };
            let value = match &node.op {
                Op::Leaf => (*bindings.get(&NodeId(i)).ok_or(Error::Unbound(i))?).clone(),
                Op::Constant(t) => t.clone(),
                Op::Add(a, b) | Op::Mul(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    if x.shape() != y.shape() {
                        return Err(shape_err(format!(
                            "element-wise operands {:?} and {:?}",
                            x.shape(),
                            y.shape()
                        )));
                    }
                    if matches!(node.op, Op::Add(..)) {
                        x.zip_map(y, |p, q| p + q)
                    } else {
                        x.zip_map(y, |p, q| p * q)
                    }
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (&values[a.0], &values[b.0]);
                    if x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows() {
                        return Err(shape_err(format!(
                            "matmul of {:?} and {:?}",
                            x.shape(),
                            y.shape()
                        )));
                    }
                    x.matmul(y)
                }
                Op::Relu(a) => values[a.0].map(|v| v.max(0.0)),
                Op::Softmax(a) => values[a.0].softmax_last(),
                Op::Gather { table, indices } => {
                    let t = &values[table.0];
                    if t.rank() != 2 {
                        return Err(shape_err(format!("gather table has shape {:?}", t.shape())));
                    }
                    if indices.is_empty() {
                        return Err(shape_err("gather with no indices".into()));
                    }
                    if let Some(bad) = indices.iter().find(|&&r| r >= t.rows()) {
                        return Err(shape_err(format!(
                            "gather index {bad} out of range for {} rows",
                            t.rows()
                        )));
                    }
                    let mut data = Vec::with_capacity(indices.len() * t.cols());
                    for &r in indices {
                        data.extend_from_slice(t.row(r));
                    }
                    Tensor::from_parts(vec![indices.len(), t.cols()], data)
                }
                Op::Scale(a, f) => values[a.0].map(|v| v * f),
                Op::Mean(a) => {
                    let x = &values[a.0];
                    Tensor::scalar(x.sum() / x.len() as f64)
                }
                Op::Reshape(a, shape) => values[a.0]
                    .reshaped(shape.clone())
                    .map_err(|e| shape_err(e.to_string()))?,
                Op::Transpose(a) => {
                    let x = &values[a.0];
                    if x.rank() != 2 {
                        return Err(shape_err(format!("transpose of {:?}", x.shape())));
                    }
                    x.transpose()
                }
                Op::CrossEntropy { logits, target } => {
                    let z = values[logits.0].data();
                    if *target >= z.len() {
                        return Err(shape_err(format!(
                            "target {target} out of range for {} logits",
                            z.len()
                        )));
                    }
                    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    Tensor::scalar(lse - z[*target])
                }
            };
            if !value.all_finite() {
                return Err(Error::NonFinite { node: i });
            }
            values.push(value);
        }
        Ok(Evaluation { values })
    }

    /// Reverse-mode gradient of a scalar `output` with respect to every leaf.
    pub fn backward(&self, eval: &Evaluation, output: NodeId) -> Result<Gradients> {
        self.propagate(eval, output, Mode::Gradient)
    }

    /// Backward pass where relu and softmax derivatives are replaced by the
    /// ratio of output to input differences between `actual` and `reference`.
    pub fn backward_rescale(
        &self,
        actual: &Evaluation,
        reference: &Evaluation,
        output: NodeId,
        options: RescaleOptions,
    ) -> Result<Gradients> {
        if reference.values.len() != self.nodes.len()
            || reference
                .values
                .iter()
                .zip(&actual.values)
                .any(|(r, a)| r.shape() != a.shape())
        {
            return Err(Error::MissingReference);
        }
        self.propagate(actual, output, Mode::Rescale { reference, options })
    }

    fn propagate(&self, eval: &Evaluation, output: NodeId, mode: Mode<'_>) -> Result<Gradients> {
        if eval.values.len() != self.nodes.len() {
            return Err(Error::invalid("evaluation does not belong to this graph"));
        }
        let out = eval.value(output);
        if !out.is_scalar() {
            return Err(Error::NotScalar {
                node: output.0,
                len: out.len(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::filled(out.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            let value = &eval.values[i];
            for (parent, contribution) in self.local_vjp(i, &node.op, &g, value, eval, &mode) {
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let by_leaf = self
            .leaves()
            .map(|id| {
                let g = grads[id.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(eval.value(id).shape()));
                (id, g)
            })
            .collect();
        Ok(Gradients { by_leaf })
    }

    fn local_vjp(
        &self,
        index: usize,
        op: &Op,
        g: &Tensor,
        value: &Tensor,
        eval: &Evaluation,
        mode: &Mode<'_>,
    ) -> Vec<(NodeId, Tensor)> {
        let v = |id: NodeId| &eval.values[id.0];
        match op {
            Op::Leaf | Op::Constant(_) => vec![],
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => vec![
                (*a, g.zip_map(v(*b), |p, q| p * q)),
                (*b, g.zip_map(v(*a), |p, q| p * q)),
            ],
            Op::MatMul(a, b) => vec![(*a, g.matmul_t(v(*b))), (*b, v(*a).t_matmul(g))],
            Op::Relu(a) => {
                let input = v(*a);
                let grad = match mode {
                    Mode::Rescale { reference, options } => {
                        let ref_in = reference.value(*a).data();
                        let ref_out = reference.values[index].data();
                        let data = (0..g.len())
                            .map(|e| {
                                let d_in = input.data()[e] - ref_in[e];
                                let m = if d_in.abs() < options.threshold {
                                    relu_derivative(input.data()[e])
                                } else {
                                    (value.data()[e] - ref_out[e]) / d_in
                                };
                                g.data()[e] * m
                            })
                            .collect();
                        Tensor::from_parts(g.shape().to_vec(), data)
                    }
                    Mode::Gradient => g.zip_map(input, |p, x| p * relu_derivative(x)),
                };
                vec![(*a, grad)]
            }
            Op::Softmax(a) => {
                let exact = softmax_vjp(value, g);
                let grad = match mode {
                    Mode::Rescale { reference, options }
                        if options.softmax == SoftmaxRescale::Diagonal =>
                    {
                        let input = v(*a).data();
                        let ref_in = reference.value(*a).data();
                        let ref_out = reference.values[index].data();
                        let data = (0..g.len())
                            .map(|e| {
                                let d_in = input[e] - ref_in[e];
                                if d_in.abs() < options.threshold {
                                    exact.data()[e]
                                } else {
                                    g.data()[e] * (value.data()[e] - ref_out[e]) / d_in
                                }
                            })
                            .collect();
                        Tensor::from_parts(g.shape().to_vec(), data)
                    }
                    _ => exact,
                };
                vec![(*a, grad)]
            }
            Op::Gather { table, indices } => {
                let t = v(*table);
                let cols = t.cols();
                let mut out = Tensor::zeros(t.shape());
                for (row, &r) in indices.iter().enumerate() {
                    let dst = &mut out.data_mut()[r * cols..(r + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(g.row(row)) {
                        *d += s;
                    }
                }
                vec![(*table, out)]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|p| p * f))],
            Op::Mean(a) => {
                let x = v(*a);
                let share = g.data()[0] / x.len() as f64;
                vec![(*a, Tensor::filled(x.shape(), share))]
            }
            Op::Reshape(a, _) => vec![(
                *a,
                Tensor::from_parts(v(*a).shape().to_vec(), g.data().to_vec()),
            )],
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::CrossEntropy { logits, target } => {
                let z = v(*logits);
                let upstream = g.data()[0];
                let mut p = super::tensor::softmax(z.data());
                p[*target] -= 1.0;
                let data = p.into_iter().map(|q| q * upstream).collect();
                vec![(*logits, Tensor::from_parts(z.shape().to_vec(), data))]
            }
        }
    }

    /// Central-difference check of `backward` for one leaf. Returns the maximum
    /// element-wise relative error with denominator `max(|a|, |b|, 1e-8)`.
    pub fn finite_diff_check(
        &self,
        bindings: &Bindings<'_>,
        leaf: NodeId,
        output: NodeId,
        eps: f64,
    ) -> Result<f64> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!(
                "finite-difference eps must be positive, got {eps}"
            )));
        }
        let eval = self.forward(bindings)?;
        let analytic = self.backward(&eval, output)?;
        let analytic = analytic
            .get(leaf)
            .ok_or_else(|| Error::invalid(format!("node {} is not a leaf", leaf.0)))?;
        let base = (*bindings.get(&leaf).ok_or(Error::Unbound(leaf.0))?).clone();

        let mut worst: f64 = 0.0;
        let mut probe = base.clone();
        for e in 0..base.len() {
            let original = base.data()[e];
            probe.data_mut()[e] = original + eps;
            let plus = self.eval_scalar(bindings, leaf, &probe, output)?;
            probe.data_mut()[e] = original - eps;
            let minus = self.eval_scalar(bindings, leaf, &probe, output)?;
            probe.data_mut()[e] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let exact = analytic.data()[e];
            let denom = numeric.abs().max(exact.abs()).max(1e-8);
            worst = worst.max((numeric - exact).abs() / denom);
        }
        Ok(worst)
    }

    fn eval_scalar(
        &self,
        bindings: &Bindings<'_>,
        leaf: NodeId,
        value: &Tensor,
        output: NodeId,
    ) -> Result<f64> {
        let mut b = bindings.clone();
        b.insert(leaf, value);
        Ok(self.forward(&b)?.value(output).data()[0])
    }
}

fn relu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn softmax_vjp(s: &Tensor, g: &Tensor) -> Tensor {
    let c = s.cols();
    let mut out = Vec::with_capacity(s.len());
    for (srow, grow) in s.data().chunks(c).zip(g.data().chunks(c)) {
        let dot: f64 = srow.iter().zip(grow).map(|(a, b)| a * b).sum();
        out.extend(srow.iter().zip(grow).map(|(si, gi)| si * (gi - dot)));
    }
    Tensor::from_parts(s.shape().to_vec(), out)
}
