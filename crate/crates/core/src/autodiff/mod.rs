//! Scalar computation graph with reverse-mode differentiation.
//!
//! Nodes live in an append-only arena, so arena order is a topological
//! order. [`Graph::derive`] with `create_graph = true` appends the
//! adjoint computation to the same arena, which makes every derivative an
//! ordinary node that can itself be differentiated (u_t, u_xx, f_t, ...).
//!
//! Leaves come in three flavours:
//! * `Constant`: a literal, never changes, may be folded away;
//! * `Input`: a non-trainable leaf whose value can be replaced;
//! * `Parameter`: a trainable leaf, tracked in the parameter registry.
//!
//! Every node caches its value at construction. After replacing leaf
//! values with [`Graph::set_value`], [`Graph::recompute`] replays the whole
//! arena in order, so a graph built once can be re-evaluated for new data
//! without rebuilding.

mod derive;

use std::fmt;

use thiserror::Error;

/// Index of a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Primitive operation recorded for a node. Parents are stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Constant,
    Input,
    Parameter,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// Power with a fixed real exponent.
    Pow(NodeId, f64),
    Exp(NodeId),
    Log(NodeId),
    Tanh(NodeId),
    Neg(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Input => "input",
            Op::Parameter => "parameter",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Pow(..) => "pow",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Tanh(_) => "tanh",
            Op::Neg(_) => "negate",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
        }
    }

    /// Parents in operand order; at most two.
    pub fn parents(&self) -> Parents {
        match *self {
            Op::Constant | Op::Input | Op::Parameter => Parents::none(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => Parents::two(a, b),
            Op::Pow(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Tanh(a)
            | Op::Neg(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a) => Parents::one(a),
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Constant | Op::Input | Op::Parameter)
    }
}

/// Small fixed-capacity parent list.
#[derive(Clone, Copy, Debug)]
pub struct Parents {
    ids: [NodeId; 2],
    len: u8,
}

impl Parents {
    fn none() -> Self {
        Parents { ids: [NodeId(0); 2], len: 0 }
    }
    fn one(a: NodeId) -> Self {
        Parents { ids: [a, NodeId(0)], len: 1 }
    }
    fn two(a: NodeId, b: NodeId) -> Self {
        Parents { ids: [a, b], len: 2 }
    }
    pub fn as_slice(&self) -> &[NodeId] {
        &self.ids[..self.len as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("domain error at node {node}: {op} of {operand}")]
    Domain { node: usize, op: &'static str, operand: f64 },
    #[error("node {0} is not a settable leaf")]
    NotSettable(usize),
}

/// Read-only view of one node.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub id: NodeId,
    pub value: f64,
    pub op: Op,
}

impl Node {
    pub fn parents(&self) -> Parents {
        self.op.parents()
    }
}

/// Growable node arena plus the registry of trainable leaves.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    ops: Vec<Op>,
    values: Vec<f64>,
    params: Vec<NodeId>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn apply(op: &Op, values: &[f64]) -> f64 {
    let v = |id: NodeId| values[id.index()];
    match *op {
        Op::Constant | Op::Input | Op::Parameter => unreachable!("leaf has no rule"),
        Op::Add(a, b) => v(a) + v(b),
        Op::Sub(a, b) => v(a) - v(b),
        Op::Mul(a, b) => v(a) * v(b),
        Op::Div(a, b) => v(a) / v(b),
        Op::Pow(a, p) => v(a).powf(p),
        Op::Exp(a) => v(a).exp(),
        Op::Log(a) => v(a).ln(),
        Op::Tanh(a) => v(a).tanh(),
        Op::Neg(a) => -v(a),
        Op::Sigmoid(a) => sigmoid(v(a)),
        Op::Softplus(a) => softplus(v(a)),
    }
}

/// Domain check for the operands of `op`; `None` when valid.
#[inline]
fn domain_violation(op: &Op, values: &[f64]) -> Option<f64> {
    match *op {
        Op::Log(a) => {
            let x = values[a.index()];
            (x <= 0.0).then_some(x)
        }
        Op::Div(_, b) => {
            let x = values[b.index()];
            (x == 0.0).then_some(x)
        }
        Op::Pow(a, p) => {
            let x = values[a.index()];
            let bad = (x < 0.0 && p.fract() != 0.0) || (x == 0.0 && p < 0.0);
            bad.then_some(x)
        }
        _ => None,
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Graph { ops: Vec::with_capacity(n), values: Vec::with_capacity(n), params: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: f64) -> NodeId {
        let id = NodeId(u32::try_from(self.ops.len()).expect("graph exceeds u32 nodes"));
        self.ops.push(op);
        self.values.push(value);
        id
    }

    fn push_op(&mut self, op: Op) -> NodeId {
        let value = apply(&op, &self.values);
        self.push(op, value)
    }

    fn check(&self, id: NodeId) -> Result<(), GraphError> {
        if id.index() < self.ops.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(id.index()))
        }
    }

    pub fn node(&self, id: NodeId) -> Result<Node, GraphError> {
        self.check(id)?;
        Ok(Node { id, value: self.values[id.index()], op: self.ops[id.index()] })
    }

    /// Cached value; call [`Graph::recompute`] after changing leaves.
    ///
    /// Panics on an id from another graph.
    #[inline]
    pub fn value(&self, id: NodeId) -> f64 {
        self.values[id.index()]
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.ops[id.index()]
    }

    pub fn parameters(&self) -> &[NodeId] {
        &self.params
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn input(&mut self, value: f64) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn parameter(&mut self, value: f64) -> NodeId {
        let id = self.push(Op::Parameter, value);
        self.params.push(id);
        id
    }

    /// Replaces the value of an input or parameter leaf.
    pub fn set_value(&mut self, id: NodeId, value: f64) -> Result<(), GraphError> {
        self.check(id)?;
        match self.ops[id.index()] {
            Op::Input | Op::Parameter => {
                self.values[id.index()] = value;
                Ok(())
            }
            _ => Err(GraphError::NotSettable(id.index())),
        }
    }

    fn literal(&self, id: NodeId) -> Option<f64> {
        match self.ops[id.index()] {
            Op::Constant => Some(self.values[id.index()]),
            _ => None,
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.literal(a) == Some(0.0) {
            return b;
        }
        if self.literal(b) == Some(0.0) {
            return a;
        }
        self.push_op(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.literal(b) == Some(0.0) {
            return a;
        }
        if self.literal(a) == Some(0.0) {
            return self.neg(b);
        }
        self.push_op(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.literal(a) == Some(1.0) {
            return b;
        }
        if self.literal(b) == Some(1.0) {
            return a;
        }
        self.push_op(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        if self.literal(b) == Some(1.0) {
            return a;
        }
        self.push_op(Op::Div(a, b))
    }

    pub fn pow(&mut self, a: NodeId, exponent: f64) -> NodeId {
        if exponent == 1.0 {
            return a;
        }
        self.push_op(Op::Pow(a, exponent))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Log(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Tanh(a))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        if let Op::Neg(inner) = self.ops[a.index()] {
            return inner;
        }
        self.push_op(Op::Neg(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Softplus(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// `c * a` for a literal `c`.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        if c == 1.0 {
            return a;
        }
        let k = self.constant(c);
        self.mul(k, a)
    }

    /// `a + c` for a literal `c`.
    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        if c == 0.0 {
            return a;
        }
        let k = self.constant(c);
        self.add(a, k)
    }

    /// Left fold of `add`; the empty sum is a literal zero.
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    /// Value of `output`, recomputing its ancestors bottom-up with domain checks.
    pub fn evaluate(&mut self, output: NodeId) -> Result<f64, GraphError> {
        self.check(output)?;
        let n = output.index() + 1;
        let mut needed = vec![false; n];
        needed[output.index()] = true;
        for i in (0..n).rev() {
            if needed[i] {
                for p in self.ops[i].parents().as_slice() {
                    needed[p.index()] = true;
                }
            }
        }
        for i in 0..n {
            if needed[i] {
                self.eval_node(i)?;
            }
        }
        Ok(self.values[output.index()])
    }

    #[inline]
    fn eval_node(&mut self, i: usize) -> Result<(), GraphError> {
        let op = self.ops[i];
        if op.is_leaf() {
            return Ok(());
        }
        if let Some(operand) = domain_violation(&op, &self.values) {
            return Err(GraphError::Domain { node: i, op: op.name(), operand });
        }
        self.values[i] = apply(&op, &self.values);
        Ok(())
    }

    /// Replays every node in arena order. Used after leaf updates.
    pub fn recompute(&mut self) -> Result<(), GraphError> {
        for i in 0..self.ops.len() {
            self.eval_node(i)?;
        }
        Ok(())
    }

    /// Clears every non-parameter node.
    ///
    /// Parameter ids survive unchanged when all parameters were created before
    /// any other node, which is how the models in this crate bind them.
    pub fn reset(&mut self) {
        let keep: Vec<(f64, bool)> = self
            .ops
            .iter()
            .zip(&self.values)
            .map(|(op, &v)| (v, matches!(op, Op::Parameter)))
            .collect();
        self.ops.clear();
        self.values.clear();
        self.params.clear();
        for (v, is_param) in keep {
            if is_param {
                self.parameter(v);
            }
        }
    }

    /// Numeric reverse sweep: adjoints of every node up to the highest seed.
    ///
    /// `adjoints` is resized and overwritten; reuse it across calls to avoid
    /// reallocation. No nodes are created.
    pub fn backward_into(&self, seeds: &[(NodeId, f64)], adjoints: &mut Vec<f64>) {
        let n = seeds.iter().map(|(id, _)| id.index() + 1).max().unwrap_or(0);
        adjoints.clear();
        adjoints.resize(n, 0.0);
        for &(id, s) in seeds {
            adjoints[id.index()] += s;
        }
        let vals = &self.values;
        for i in (0..n).rev() {
            let g = adjoints[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Constant | Op::Input | Op::Parameter => {}
                Op::Add(a, b) => {
                    adjoints[a.index()] += g;
                    adjoints[b.index()] += g;
                }
                Op::Sub(a, b) => {
                    adjoints[a.index()] += g;
                    adjoints[b.index()] -= g;
                }
                Op::Mul(a, b) => {
                    adjoints[a.index()] += g * vals[b.index()];
                    adjoints[b.index()] += g * vals[a.index()];
                }
                Op::Div(a, b) => {
                    let vb = vals[b.index()];
                    adjoints[a.index()] += g / vb;
                    adjoints[b.index()] -= g * vals[i] / vb;
                }
                Op::Pow(a, p) => {
                    adjoints[a.index()] += g * p * vals[a.index()].powf(p - 1.0);
                }
                Op::Exp(a) => adjoints[a.index()] += g * vals[i],
                Op::Log(a) => adjoints[a.index()] += g / vals[a.index()],
                Op::Tanh(a) => adjoints[a.index()] += g * (1.0 - vals[i] * vals[i]),
                Op::Neg(a) => adjoints[a.index()] -= g,
                Op::Sigmoid(a) => adjoints[a.index()] += g * vals[i] * (1.0 - vals[i]),
                Op::Softplus(a) => adjoints[a.index()] += g * sigmoid(vals[a.index()]),
            }
        }
    }

    /// Gradient of `output` with respect to `wrt`, as plain numbers.
    pub fn gradient(&self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<f64>, GraphError> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        let mut adj = Vec::new();
        self.backward_into(&[(output, 1.0)], &mut adj);
        Ok(wrt.iter().map(|w| adj.get(w.index()).copied().unwrap_or(0.0)).collect())
    }
}
