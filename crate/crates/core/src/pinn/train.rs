use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    residual, Balancing, DynamicsNodes, DynamicsState, LossWeights, PinnError, Reduction, ResidualScales,
    TrainConfig,
};
use crate::autodiff::{Graph, NodeId};
use crate::data::{Sample, StandardizationFactors};
use crate::nn::{Adam, AdamConfig, Dropout, Mlp, MlpConfig, MlpNodes, ParamLayout};

/// Loss summary of one epoch: batch values averaged over the epoch's batches,
/// weights as they stand at the end of the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_u: f64,
    pub l_f: f64,
    pub l_ft: f64,
    pub lambda: LossWeights,
    pub total: f64,
    /// Eval-mode mean squared error on the validation set (standardized).
    pub validation_l_u: Option<f64>,
}

/// Losses and gradient of the total loss for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEval {
    /// `[L_u, L_f, L_ft]`; absent terms are zero.
    pub terms: [f64; 3],
    pub total: f64,
    /// Gradient over [`Trainer::params`].
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub features: usize,
    pub surrogate: Mlp,
    pub dynamics: DynamicsState,
    pub loss_weights: LossWeights,
    pub factors: StandardizationFactors,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Surrogate output for standardized features and time.
    pub fn predict_standardized(&self, x: &[f64], t: f64) -> Result<f64, PinnError> {
        let mut inputs = if self.config.surrogate.use_features { x.to_vec() } else { Vec::new() };
        inputs.push(t);
        Ok(self.surrogate.predict(&inputs)?[0])
    }

    /// Prediction in label units from raw features and cycle count.
    pub fn predict(&self, x: &[f64], t: f64) -> Result<f64, PinnError> {
        if x.len() != self.features {
            return Err(PinnError::FeatureMismatch { index: 0, expected: self.features, got: x.len() });
        }
        let z = self.factors.inputs(x, t);
        let (xs, ts) = z.split_at(self.features);
        Ok(self.factors.unscale_u(self.predict_standardized(xs, ts[0])?))
    }
}

/// Single-sample loss graph replayed over every sample of a batch.
///
/// The graph holds the surrogate forward pass, the nested derivatives, the
/// residual and the three squared errors for one sample, with the sample and
/// the dropout masks as input leaves. Per sample the leaves are set, the tape
/// is replayed and a reverse sweep seeded with the loss weights accumulates
/// the parameter gradient.
pub struct Trainer {
    cfg: TrainConfig,
    features: usize,
    g: Graph,
    x: Vec<NodeId>,
    t: NodeId,
    y: NodeId,
    sur_nodes: MlpNodes,
    sur_masks: Vec<Vec<NodeId>>,
    hpm: Option<(MlpNodes, Vec<Vec<NodeId>>)>,
    param_ids: Vec<NodeId>,
    squares: [Option<NodeId>; 3],
    params: Vec<f64>,
    n_surrogate: usize,
    n_net: usize,
    layout: ParamLayout,
    surrogate: Mlp,
    dynamics: DynamicsState,
    adjoints: Vec<f64>,
}

impl Trainer {
    /// Fresh Xavier-initialised models; the seed fixes every draw.
    pub fn new(cfg: &TrainConfig, factors: &StandardizationFactors) -> Result<Self, PinnError> {
        cfg.validate()?;
        let features = factors.features();
        let in_dim = if cfg.surrogate.use_features { features + 1 } else { 1 };
        let sc = &cfg.surrogate;
        let mcfg = MlpConfig::new(in_dim, sc.hidden_layers, sc.neurons, 1).with_dropout(sc.dropout);
        let surrogate = Mlp::xavier_normal(mcfg, cfg.seed)?;
        let dynamics = DynamicsState::init(cfg, features, cfg.seed.wrapping_add(1))?;
        Self::from_state(cfg, factors, surrogate, dynamics, LossWeights::default())
    }

    pub fn from_state(
        cfg: &TrainConfig,
        factors: &StandardizationFactors,
        surrogate: Mlp,
        dynamics: DynamicsState,
        weights: LossWeights,
    ) -> Result<Self, PinnError> {
        cfg.validate()?;
        let features = factors.features();
        let scales = ResidualScales::from_factors(factors);
        let mut g = Graph::new();
        let sur_nodes = surrogate.bind(&mut g);
        let mut dyn_nodes = dynamics.bind(&mut g);
        let x: Vec<NodeId> = (0..features).map(|_| g.input(0.0)).collect();
        let t = g.input(0.0);
        let y = g.input(0.0);

        let mut inputs = if cfg.surrogate.use_features { x.clone() } else { Vec::new() };
        inputs.push(t);
        let sur_masks = if sur_nodes.dropout() > 0.0 { sur_nodes.mask_leaves(&mut g) } else { Vec::new() };
        let u = if sur_masks.is_empty() {
            sur_nodes.forward(&mut g, &inputs, Dropout::off())?[0]
        } else {
            sur_nodes.forward::<ChaCha8Rng>(&mut g, &inputs, Dropout::Masks(&sur_masks))?[0]
        };
        let e = g.sub(u, y);
        let sq_u = g.square(e);

        let mut hpm = None;
        let mut squares = [Some(sq_u), None, None];
        if !matches!(dyn_nodes, DynamicsNodes::Baseline) {
            let u_res = if !sur_masks.is_empty() && !cfg.dropout_in_residual {
                sur_nodes.forward(&mut g, &inputs, Dropout::off())?[0]
            } else {
                u
            };
            let hpm_masks = match &dyn_nodes {
                DynamicsNodes::Deephpm { net, .. } if net.dropout() > 0.0 && cfg.dropout_in_residual => {
                    let m = net.mask_leaves(&mut g);
                    hpm = Some((net.clone(), m.clone()));
                    m
                }
                _ => Vec::new(),
            };
            let r = if hpm_masks.is_empty() {
                residual(&mut g, u_res, t, &x, &mut dyn_nodes, &scales, Dropout::off())?
            } else {
                residual::<ChaCha8Rng>(&mut g, u_res, t, &x, &mut dyn_nodes, &scales, Dropout::Masks(&hpm_masks))?
            };
            squares[1] = Some(g.square(r.f));
            squares[2] = Some(g.square(r.f_t));
        }

        let mut param_ids = sur_nodes.param_ids();
        param_ids.extend(dyn_nodes.param_ids());
        let mut params = surrogate.params.clone();
        params.extend(dynamics.params());
        let n_surrogate = surrogate.params.len();
        let n_net = params.len();
        params.extend(weights.as_array());
        let mut layout = ParamLayout::new();
        layout.extend("surrogate", &surrogate.layout());
        layout.extend("", &dynamics.layout());
        for name in ["lambda_prime_u", "lambda_prime_f", "lambda_prime_ft"] {
            layout.push(name, 1);
        }
        debug_assert_eq!(layout.len(), params.len());

        Ok(Trainer {
            cfg: cfg.clone(),
            features,
            g,
            x,
            t,
            y,
            sur_nodes,
            sur_masks,
            hpm,
            param_ids,
            squares,
            params,
            n_surrogate,
            n_net,
            layout,
            surrogate,
            dynamics,
            adjoints: Vec::new(),
        })
    }

    /// Surrogate, rate-model and `lambda'` values, in that order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Number of nodes in the replayed single-sample graph.
    pub fn graph_len(&self) -> usize {
        self.g.len()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<(), PinnError> {
        if values.len() != self.params.len() {
            return Err(PinnError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        self.params.copy_from_slice(values);
        self.push_params()
    }

    fn push_params(&mut self) -> Result<(), PinnError> {
        for (id, v) in self.param_ids.iter().zip(&self.params) {
            self.g.set_value(*id, *v)?;
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        let l = &self.params[self.n_net..];
        LossWeights::from_array([l[0], l[1], l[2]])
    }

    /// Current surrogate, rate model and weights as standalone values.
    pub fn snapshot(&self) -> (Mlp, DynamicsState, LossWeights) {
        let mut s = self.surrogate.clone();
        s.params.copy_from_slice(&self.params[..self.n_surrogate]);
        let mut d = self.dynamics.clone();
        d.set_params(&self.params[self.n_surrogate..self.n_net]);
        (s, d, self.loss_weights())
    }

    fn set_masks<R: Rng>(&mut self, rng: Option<&mut R>) -> Result<(), PinnError> {
        match rng {
            Some(rng) => {
                if !self.sur_masks.is_empty() {
                    let vals = self.sur_nodes.sample_masks(rng);
                    set_leaves(&mut self.g, &self.sur_masks, &vals)?;
                }
                if let Some((net, leaves)) = &self.hpm {
                    let vals = net.sample_masks(rng);
                    set_leaves(&mut self.g, leaves, &vals)?;
                }
            }
            None => {
                let all = self.sur_masks.iter().chain(self.hpm.iter().flat_map(|(_, l)| l));
                for id in all.flatten() {
                    self.g.set_value(*id, 1.0)?;
                }
            }
        }
        Ok(())
    }

    /// Loss terms, total and gradient on a batch.
    ///
    /// With `rng`, one dropout mask is drawn and shared by the whole batch;
    /// without it the networks run in evaluation mode.
    pub fn evaluate_batch<R: Rng>(&mut self, batch: &[&Sample], rng: Option<&mut R>) -> Result<BatchEval, PinnError> {
        if batch.is_empty() {
            return Err(PinnError::EmptyTrainingSet);
        }
        self.set_masks(rng)?;
        let lambda = self.loss_weights().as_array();
        let weights = match self.cfg.balancing {
            Balancing::Sum => [1.0; 3],
            Balancing::AdpBal => lambda.map(|l| (-l).exp()),
        };
        let c = match self.cfg.reduction {
            Reduction::SumOfSquares => 1.0,
            Reduction::Mean => 1.0 / batch.len() as f64,
        };
        let seeds: Vec<(NodeId, f64)> =
            (0..3).filter_map(|k| self.squares[k].map(|id| (id, c * weights[k]))).collect();

        let mut grad = vec![0.0; self.params.len()];
        let mut terms = [0.0; 3];
        for s in batch {
            for (id, v) in self.x.iter().zip(&s.x) {
                self.g.set_value(*id, *v)?;
            }
            self.g.set_value(self.t, s.t)?;
            self.g.set_value(self.y, s.y)?;
            self.g.recompute()?;
            for (k, sq) in self.squares.iter().enumerate() {
                if let Some(id) = sq {
                    terms[k] += self.g.value(*id);
                }
            }
            self.g.backward_into(&seeds, &mut self.adjoints);
            for (gj, id) in grad.iter_mut().zip(&self.param_ids) {
                *gj += self.adjoints[id.index()];
            }
        }
        terms.iter_mut().for_each(|v| *v *= c);

        let mut total = 0.0;
        for k in 0..3 {
            if self.squares[k].is_none() {
                continue;
            }
            match self.cfg.balancing {
                Balancing::Sum => total += terms[k],
                Balancing::AdpBal => {
                    total += weights[k] * terms[k] + lambda[k];
                    grad[self.n_net + k] = 1.0 - weights[k] * terms[k];
                }
            }
        }
        Ok(BatchEval { terms, total, grad })
    }

    /// Eval-mode mean squared error of the surrogate on standardized samples.
    pub fn data_mse(&mut self, samples: &[Sample]) -> Result<f64, PinnError> {
        self.surrogate.params.copy_from_slice(&self.params[..self.n_surrogate]);
        let mut acc = 0.0;
        let mut inputs = Vec::with_capacity(self.features + 1);
        for s in samples {
            inputs.clear();
            if self.cfg.surrogate.use_features {
                inputs.extend_from_slice(&s.x);
            }
            inputs.push(s.t);
            let e = self.surrogate.predict(&inputs)?[0] - s.y;
            acc += e * e;
        }
        Ok(acc / samples.len() as f64)
    }
}

fn set_leaves(g: &mut Graph, leaves: &[Vec<NodeId>], values: &[Vec<f64>]) -> Result<(), PinnError> {
    for (ids, vals) in leaves.iter().zip(values) {
        for (id, v) in ids.iter().zip(vals) {
            g.set_value(*id, *v)?;
        }
    }
    Ok(())
}

fn check_samples(samples: &[Sample], features: usize) -> Result<(), PinnError> {
    for (index, s) in samples.iter().enumerate() {
        if s.x.len() != features {
            return Err(PinnError::FeatureMismatch { index, expected: features, got: s.x.len() });
        }
        if !(s.t.is_finite() && s.y.is_finite() && s.x.iter().all(|v| v.is_finite())) {
            return Err(PinnError::NonFiniteSample { index });
        }
    }
    Ok(())
}

/// Trains surrogate, rate model and loss weights jointly with Adam.
///
/// `train` and `validation` must already be standardized with `factors`; the
/// factors rescale the Verhulst residual to physical units. Minibatches are
/// drawn without replacement and reshuffled every epoch.
pub fn train(
    train: &[Sample],
    validation: &[Sample],
    factors: &StandardizationFactors,
    cfg: &TrainConfig,
) -> Result<TrainedModel, PinnError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PinnError::EmptyTrainingSet);
    }
    let features = factors.features();
    check_samples(train, features)?;
    check_samples(validation, features)?;

    let mut tr = Trainer::new(cfg, factors)?;
    let mut adam = Adam::new(AdamConfig::with_learning_rate(cfg.learning_rate), tr.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    log::debug!("trainer graph: {} nodes per sample, {} parameters", tr.graph_len(), tr.params.len());

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let ev = tr.evaluate_batch(&batch, Some(&mut rng))?;
            if !(ev.terms.iter().all(|v| v.is_finite()) && ev.total.is_finite()) {
                let [l_u, l_f, l_ft] = ev.terms;
                return Err(PinnError::NonFiniteLoss { epoch, l_u, l_f, l_ft });
            }
            adam.step(&mut tr.params, &ev.grad, &tr.layout).map_err(|source| PinnError::Optimizer { epoch, source })?;
            tr.push_params()?;
            for k in 0..3 {
                sums[k] += ev.terms[k];
            }
            total += ev.total;
            batches += 1;
        }
        let nb = batches as f64;
        let validation_l_u = if validation.is_empty() { None } else { Some(tr.data_mse(validation)?) };
        let rec = EpochRecord {
            epoch,
            l_u: sums[0] / nb,
            l_f: sums[1] / nb,
            l_ft: sums[2] / nb,
            lambda: tr.loss_weights(),
            total: total / nb,
            validation_l_u,
        };
        if epoch % 100 == 0 || epoch == cfg.epochs {
            log::info!(
                "epoch {epoch}: L_u {:.3e} L_f {:.3e} L_ft {:.3e} total {:.4e}",
                rec.l_u,
                rec.l_f,
                rec.l_ft,
                rec.total
            );
        }
        if let (true, Some(v)) = (cfg.select_best, validation_l_u) {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, tr.params.clone()));
            }
        }
        history.push(rec);
    }

    let best_epoch = match best {
        Some((_, epoch, params)) => {
            tr.set_params(&params)?;
            epoch
        }
        None => cfg.epochs,
    };
    let (surrogate, dynamics, loss_weights) = tr.snapshot();
    Ok(TrainedModel {
        config: cfg.clone(),
        features,
        surrogate,
        dynamics,
        loss_weights,
        factors: factors.clone(),
        best_epoch,
        history,
    })
}
