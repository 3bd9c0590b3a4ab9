use super::{Graph, GraphError, NodeId, Op};

impl Graph {
    /// Derivatives of the scalar `output` with respect to each of `wrt`.
    ///
    /// With `create_graph` the adjoint computation is appended to this graph
    /// and the returned nodes are differentiable like any other node. Without
    /// it, the returned nodes are literals holding the current values.
    ///
    /// A `wrt` node that `output` does not depend on yields a literal zero.
    pub fn derive(
        &mut self,
        output: NodeId,
        wrt: &[NodeId],
        create_graph: bool,
    ) -> Result<Vec<NodeId>, GraphError> {
        self.check(output)?;
        for &w in wrt {
            self.check(w)?;
        }
        let n = output.index() + 1;

        // only nodes downstream of some wrt carry a non-zero adjoint path
        let mut dep = vec![false; n];
        for &w in wrt {
            if w.index() < n {
                dep[w.index()] = true;
            }
        }
        for i in 0..n {
            if !dep[i] {
                dep[i] = self.ops[i].parents().as_slice().iter().any(|p| dep[p.index()]);
            }
        }

        if !create_graph {
            let mut adj = Vec::new();
            self.backward_into(&[(output, 1.0)], &mut adj);
            return Ok(wrt
                .iter()
                .map(|w| {
                    let v = if w.index() < n && dep[w.index()] { adj[w.index()] } else { 0.0 };
                    self.constant(v)
                })
                .collect());
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        if dep[output.index()] {
            adj[output.index()] = Some(self.constant(1.0));
        }

        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            let out = NodeId(i as u32);
            match self.ops[i] {
                Op::Constant | Op::Input | Op::Parameter => {}
                Op::Add(a, b) => {
                    if dep[a.index()] {
                        self.accumulate(&mut adj, a, g);
                    }
                    if dep[b.index()] {
                        self.accumulate(&mut adj, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if dep[a.index()] {
                        self.accumulate(&mut adj, a, g);
                    }
                    if dep[b.index()] {
                        let c = self.neg(g);
                        self.accumulate(&mut adj, b, c);
                    }
                }
                Op::Mul(a, b) => {
                    if dep[a.index()] {
                        let c = self.mul(g, b);
                        self.accumulate(&mut adj, a, c);
                    }
                    if dep[b.index()] {
                        let c = self.mul(g, a);
                        self.accumulate(&mut adj, b, c);
                    }
                }
                Op::Div(a, b) => {
                    if dep[a.index()] {
                        let c = self.div(g, b);
                        self.accumulate(&mut adj, a, c);
                    }
                    if dep[b.index()] {
                        // d(a/b)/db = -(a/b)/b
                        let t = self.mul(g, out);
                        let t = self.div(t, b);
                        let c = self.neg(t);
                        self.accumulate(&mut adj, b, c);
                    }
                }
                Op::Pow(a, p) => {
                    let c = if p == 2.0 {
                        let two_a = self.scale(a, 2.0);
                        self.mul(g, two_a)
                    } else {
                        let d = self.pow(a, p - 1.0);
                        let d = self.scale(d, p);
                        self.mul(g, d)
                    };
                    self.accumulate(&mut adj, a, c);
                }
                Op::Exp(a) => {
                    let c = self.mul(g, out);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Log(a) => {
                    let c = self.div(g, a);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Tanh(a) => {
                    // 1 - tanh^2
                    let sq = self.mul(out, out);
                    let one = self.constant(1.0);
                    let d = self.sub(one, sq);
                    let c = self.mul(g, d);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Neg(a) => {
                    let c = self.neg(g);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Sigmoid(a) => {
                    let one = self.constant(1.0);
                    let comp = self.sub(one, out);
                    let d = self.mul(out, comp);
                    let c = self.mul(g, d);
                    self.accumulate(&mut adj, a, c);
                }
                Op::Softplus(a) => {
                    let d = self.sigmoid(a);
                    let c = self.mul(g, d);
                    self.accumulate(&mut adj, a, c);
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|w| {
                let slot = if w.index() < n { adj[w.index()] } else { None };
                slot.unwrap_or_else(|| self.constant(0.0))
            })
            .collect())
    }

    fn accumulate(&mut self, adj: &mut [Option<NodeId>], target: NodeId, contribution: NodeId) {
        let slot = &mut adj[target.index()];
        *slot = Some(match *slot {
            None => contribution,
            Some(prev) => self.add(prev, contribution),
        });
    }

    /// Convenience: first derivative of `output` w.r.t. a single node.
    pub fn grad_node(&mut self, output: NodeId, wrt: NodeId) -> Result<NodeId, GraphError> {
        Ok(self.derive(output, &[wrt], true)?[0])
    }
}
