use rand::Rng;

use super::{Balancing, PinnError, Reduction};
use crate::autodiff::{Graph, NodeId};
use crate::data::StandardizationFactors;
use crate::dynamics::{deephpm_rate, verhulst_rate, HpmInputs, HpmTerm, TermValues, VerhulstNodes};
use crate::nn::{Dropout, MlpNodes};

/// Rate-model parameters bound into a graph.
#[derive(Clone, Debug)]
pub enum DynamicsNodes {
    Baseline,
    Verhulst(VerhulstNodes),
    Deephpm { inputs: HpmInputs, net: MlpNodes },
}

impl DynamicsNodes {
    pub fn param_ids(&self) -> Vec<NodeId> {
        match self {
            DynamicsNodes::Baseline => Vec::new(),
            DynamicsNodes::Verhulst(v) => v.param_ids(),
            DynamicsNodes::Deephpm { net, .. } => net.param_ids(),
        }
    }
}

/// Maps the standardized surrogate output to physical units for the
/// Verhulst law: `u = u_mean + u_std * u~` and `t = t_mean + t_std * t~`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualScales {
    pub u_mean: f64,
    pub u_std: f64,
    pub t_std: f64,
}

impl ResidualScales {
    pub const IDENTITY: ResidualScales = ResidualScales { u_mean: 0.0, u_std: 1.0, t_std: 1.0 };

    pub fn from_factors(f: &StandardizationFactors) -> Self {
        ResidualScales { u_mean: f.u_mean, u_std: f.u_std, t_std: f.t_std }
    }
}

/// Nodes of the residual `f = u_t - G` and its time derivative.
#[derive(Clone, Copy, Debug)]
pub struct Residual {
    pub u_t: NodeId,
    pub f: NodeId,
    pub f_t: NodeId,
}

/// Builds `f` and `f_t` for a surrogate output `u` at inputs `(x, t)`.
///
/// The Verhulst residual is formed in physical units (per cycle); DeepHPM
/// works on the standardized quantities directly. `hpm_dropout` applies to
/// the DeepHPM network only.
pub fn residual<R: Rng>(
    g: &mut Graph,
    u: NodeId,
    t: NodeId,
    x: &[NodeId],
    dynamics: &mut DynamicsNodes,
    scales: &ResidualScales,
    hpm_dropout: Dropout<'_, R>,
) -> Result<Residual, PinnError> {
    match dynamics {
        DynamicsNodes::Baseline => Err(PinnError::InvalidConfig("the baseline model has no residual".into())),
        DynamicsNodes::Verhulst(params) => {
            let u_t = g.derive(u, &[t], true)?[0];
            let u_phys = g.scale(u, scales.u_std);
            let u_phys = g.offset(u_phys, scales.u_mean);
            let ut_phys = g.scale(u_t, scales.u_std / scales.t_std);
            let rate = verhulst_rate(g, u_phys, params);
            let f = g.sub(ut_phys, rate);
            let f_t = g.derive(f, &[t], true)?[0];
            let f_t = g.scale(f_t, 1.0 / scales.t_std);
            Ok(Residual { u_t, f, f_t })
        }
        DynamicsNodes::Deephpm { inputs, net } => {
            let need_ux = inputs.contains(HpmTerm::Ux) || inputs.contains(HpmTerm::Uxx);
            let mut wrt = vec![t];
            if need_ux {
                wrt.extend_from_slice(x);
            }
            let d = g.derive(u, &wrt, true)?;
            let u_t = d[0];
            let ux = need_ux.then(|| d[1..].to_vec());
            let uxx = match (&ux, inputs.contains(HpmTerm::Uxx)) {
                (Some(ux), true) => Some(
                    ux.iter()
                        .zip(x)
                        .map(|(&us, &xs)| g.derive(us, &[xs], true).map(|v| v[0]))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                _ => None,
            };
            let terms = TermValues { x: Some(x.to_vec()), t: Some(t), u: Some(u), ux, uxx };
            let rate = deephpm_rate(g, net, inputs, &terms, hpm_dropout)?;
            let f = g.sub(u_t, rate);
            let f_t = g.derive(f, &[t], true)?[0];
            Ok(Residual { u_t, f, f_t })
        }
    }
}

/// Data, residual and residual-derivative losses of a batch.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub l_u: NodeId,
    pub l_f: Option<NodeId>,
    pub l_ft: Option<NodeId>,
}

impl LossTerms {
    pub fn as_array(&self) -> [Option<NodeId>; 3] {
        [Some(self.l_u), self.l_f, self.l_ft]
    }
}

fn reduce(g: &mut Graph, squares: Vec<NodeId>, reduction: Reduction) -> NodeId {
    let n = squares.len() as f64;
    let s = g.sum(&squares);
    match reduction {
        Reduction::SumOfSquares => s,
        Reduction::Mean => g.scale(s, 1.0 / n),
    }
}

/// Squared-error losses over a batch; `residuals` may be empty (baseline).
pub fn loss_terms(
    g: &mut Graph,
    predictions: &[NodeId],
    labels: &[f64],
    residuals: &[Residual],
    reduction: Reduction,
) -> Result<LossTerms, PinnError> {
    if predictions.is_empty() {
        return Err(PinnError::EmptyTrainingSet);
    }
    if predictions.len() != labels.len() {
        return Err(PinnError::InvalidConfig(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(index) = labels.iter().position(|y| !y.is_finite()) {
        return Err(PinnError::NonFiniteSample { index });
    }
    let sq_u = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let y = g.constant(y);
            let e = g.sub(p, y);
            g.square(e)
        })
        .collect();
    let l_u = reduce(g, sq_u, reduction);
    if residuals.is_empty() {
        return Ok(LossTerms { l_u, l_f: None, l_ft: None });
    }
    let sq_f = residuals.iter().map(|r| g.square(r.f)).collect();
    let sq_ft = residuals.iter().map(|r| g.square(r.f_t)).collect();
    let l_f = reduce(g, sq_f, reduction);
    let l_ft = reduce(g, sq_ft, reduction);
    Ok(LossTerms { l_u, l_f: Some(l_f), l_ft: Some(l_ft) })
}

/// Scalar training objective.
///
/// `AdpBal`: `sum_k exp(-lambda'_k) L_k + sum_k lambda'_k` over the present
/// terms. `Sum`: `sum_k L_k`, and the `lambda'` nodes do not enter.
pub fn total_loss(g: &mut Graph, terms: &LossTerms, lambda: [NodeId; 3], balancing: Balancing) -> NodeId {
    let mut parts = Vec::new();
    for (term, lam) in terms.as_array().into_iter().zip(lambda) {
        let Some(l) = term else { continue };
        match balancing {
            Balancing::Sum => parts.push(l),
            Balancing::AdpBal => {
                let neg = g.neg(lam);
                let w = g.exp(neg);
                parts.push(g.mul(w, l));
                parts.push(lam);
            }
        }
    }
    g.sum(&parts)
}
