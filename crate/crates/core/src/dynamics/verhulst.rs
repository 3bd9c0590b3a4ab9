use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::autodiff::{Graph, NodeId};
use crate::nn::ParamLayout;

/// Trainable Verhulst parameters in unconstrained form.
///
/// The physical values are smooth maps of the raw ones:
/// `r = softplus(raw_r)`, `K = k_min + (k_max - k_min) * sigmoid(raw_k)`,
/// `C = u0 * sigmoid(raw_c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerhulstParams {
    pub raw_r: f64,
    pub raw_k: f64,
    pub raw_c: f64,
    /// Initial capacity loss; fixed, not trained.
    pub u0: f64,
    pub k_min: f64,
    pub k_max: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl VerhulstParams {
    pub const DEFAULT_U0: f64 = 0.10;
    pub const DEFAULT_K_MIN: f64 = 0.20;
    pub const DEFAULT_K_MAX: f64 = 1.00;

    /// Builds raw parameters that map to the given physical values.
    pub fn from_physical(r: f64, k: f64, c: f64, u0: f64) -> Result<Self, DynamicsError> {
        Self::with_bounds(r, k, c, u0, Self::DEFAULT_K_MIN, Self::DEFAULT_K_MAX)
    }

    pub fn with_bounds(r: f64, k: f64, c: f64, u0: f64, k_min: f64, k_max: f64) -> Result<Self, DynamicsError> {
        if !(k_min < k_max) {
            return Err(DynamicsError::InvalidParams(format!("K bounds ({k_min}, {k_max}) are empty")));
        }
        if !(u0 > 0.0 && u0 < k_min) {
            return Err(DynamicsError::InvalidParams(format!(
                "u0 = {u0} must lie in (0, k_min = {k_min}) so that C < K always holds"
            )));
        }
        if !(r > 0.0) {
            return Err(DynamicsError::InvalidParams(format!("r = {r} must be positive")));
        }
        if !(k > k_min && k < k_max) {
            return Err(DynamicsError::InvalidParams(format!("K = {k} outside ({k_min}, {k_max})")));
        }
        if !(c > 0.0 && c < u0) {
            return Err(DynamicsError::InvalidParams(format!("C = {c} outside (0, u0 = {u0})")));
        }
        // inverse softplus: log(e^r - 1)
        let raw_r = r + (-(-r).exp_m1()).ln();
        Ok(VerhulstParams {
            raw_r,
            raw_k: logit((k - k_min) / (k_max - k_min)),
            raw_c: logit(c / u0),
            u0,
            k_min,
            k_max,
        })
    }

    pub fn r(&self) -> f64 {
        self.raw_r.max(0.0) + (-self.raw_r.abs()).exp().ln_1p()
    }

    pub fn k(&self) -> f64 {
        self.k_min + (self.k_max - self.k_min) * sigmoid(self.raw_k)
    }

    pub fn c(&self) -> f64 {
        self.u0 * sigmoid(self.raw_c)
    }

    pub fn raw(&self) -> [f64; 3] {
        [self.raw_r, self.raw_k, self.raw_c]
    }

    pub fn set_raw(&mut self, raw: &[f64]) {
        self.raw_r = raw[0];
        self.raw_k = raw[1];
        self.raw_c = raw[2];
    }

    pub fn layout(&self) -> ParamLayout {
        let mut l = ParamLayout::new();
        l.push("raw_r", 1);
        l.push("raw_k", 1);
        l.push("raw_c", 1);
        l
    }

    /// `r (u - C) (1 - (u - C) / (K - C))` on plain numbers.
    pub fn rate(&self, u: f64) -> f64 {
        let (r, k, c) = (self.r(), self.k(), self.c());
        r * (u - c) * (1.0 - (u - c) / (k - c))
    }

    /// Registers the raw values as parameters and derives the mapped nodes.
    pub fn bind(&self, g: &mut Graph) -> VerhulstNodes {
        let raw_r = g.parameter(self.raw_r);
        let raw_k = g.parameter(self.raw_k);
        let raw_c = g.parameter(self.raw_c);
        VerhulstNodes { raw_r, raw_k, raw_c, mapped: None, u0: self.u0, k_min: self.k_min, k_max: self.k_max }
    }
}

/// Parameter leaves of a bound [`VerhulstParams`].
#[derive(Clone, Debug)]
pub struct VerhulstNodes {
    pub raw_r: NodeId,
    pub raw_k: NodeId,
    pub raw_c: NodeId,
    mapped: Option<(NodeId, NodeId, NodeId)>,
    u0: f64,
    k_min: f64,
    k_max: f64,
}

impl VerhulstNodes {
    pub fn param_ids(&self) -> Vec<NodeId> {
        vec![self.raw_r, self.raw_k, self.raw_c]
    }

    /// (r, K, C) nodes; built once per graph.
    pub fn mapped(&mut self, g: &mut Graph) -> (NodeId, NodeId, NodeId) {
        if let Some(m) = self.mapped {
            return m;
        }
        let r = g.softplus(self.raw_r);
        let sk = g.sigmoid(self.raw_k);
        let k = g.scale(sk, self.k_max - self.k_min);
        let k = g.offset(k, self.k_min);
        let sc = g.sigmoid(self.raw_c);
        let c = g.scale(sc, self.u0);
        self.mapped = Some((r, k, c));
        (r, k, c)
    }
}

/// Graph node for the modified Verhulst right-hand side at state `u`.
pub fn verhulst_rate(g: &mut Graph, u: NodeId, params: &mut VerhulstNodes) -> NodeId {
    let (r, k, c) = params.mapped(g);
    let excess = g.sub(u, c);
    let span = g.sub(k, c);
    let frac = g.div(excess, span);
    let one = g.constant(1.0);
    let room = g.sub(one, frac);
    let growth = g.mul(r, excess);
    g.mul(growth, room)
}
