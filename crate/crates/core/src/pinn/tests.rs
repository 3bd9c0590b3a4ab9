use super::*;
use crate::autodiff::Graph;
use crate::data::{Sample, StandardizationFactors};
use crate::dynamics::{HpmInputs, VerhulstParams};
use crate::nn::{Dropout, Mlp, MlpConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn constant_surrogate(inputs: usize, value: f64) -> Mlp {
    let cfg = MlpConfig::new(inputs, 1, 4, 1);
    let mut params = vec![0.0; cfg.parameter_count()];
    *params.last_mut().unwrap() = value;
    Mlp::from_params(cfg, 0, params).unwrap()
}

#[test]
fn constant_surrogate_at_c_has_zero_residual() {
    let p = VerhulstParams::from_physical(0.02, 0.5, 0.04, 0.1).unwrap();
    let sur = constant_surrogate(2, p.c());
    let mut g = Graph::new();
    let sn = sur.bind(&mut g);
    let mut dn = DynamicsState::Verhulst(p).bind(&mut g);
    let x = g.input(0.3);
    let t = g.input(17.0);
    let u = sn.forward(&mut g, &[x, t], Dropout::off()).unwrap()[0];
    let r = residual(&mut g, u, t, &[x], &mut dn, &ResidualScales::IDENTITY, Dropout::off()).unwrap();
    assert_eq!(g.value(r.u_t), 0.0);
    assert!(g.value(r.f).abs() < 1e-18);
    assert!(g.value(r.f_t).abs() < 1e-18);
}

#[test]
fn closed_form_logistic_satisfies_residual() {
    let p = VerhulstParams::from_physical(0.01, 0.5, 0.05, 0.1).unwrap();
    let (r, k, c, u0) = (p.r(), p.k(), p.c(), p.u0);
    let a = (k - u0) / (u0 - c);
    for i in 0..20 {
        let tv = 25.0 * i as f64;
        let mut g = Graph::new();
        let mut dn = DynamicsState::Verhulst(p.clone()).bind(&mut g);
        let t = g.input(tv);
        // u = C + (K - C) / (1 + A exp(-r t))
        let rt = g.scale(t, -r);
        let e = g.exp(rt);
        let ae = g.scale(e, a);
        let den = g.offset(ae, 1.0);
        let num = g.constant(k - c);
        let frac = g.div(num, den);
        let u = g.offset(frac, c);
        let res = residual(&mut g, u, t, &[], &mut dn, &ResidualScales::IDENTITY, Dropout::off()).unwrap();
        assert!(g.value(res.f).abs() < 1e-8, "t={tv}: f={}", g.value(res.f));
        assert!(g.value(res.f_t).abs() < 1e-8);
    }
}

#[test]
fn zero_deephpm_gives_f_equal_u_t() {
    let inputs: HpmInputs = "x,t,u,ux".parse().unwrap();
    let mut hpm = crate::dynamics::DeepHpm::new(inputs, 3, 2, 8, 0.0, 1).unwrap();
    hpm.net.params.iter_mut().for_each(|w| *w = 0.0);
    let sur = Mlp::xavier_normal(MlpConfig::new(4, 2, 8, 1), 3).unwrap();
    let mut g = Graph::new();
    let sn = sur.bind(&mut g);
    let mut dn = DynamicsState::Deephpm(hpm).bind(&mut g);
    let x: Vec<_> = [0.1, -0.4, 0.9].iter().map(|&v| g.input(v)).collect();
    let t = g.input(0.25);
    let mut inp = x.clone();
    inp.push(t);
    let u = sn.forward(&mut g, &inp, Dropout::off()).unwrap()[0];
    let r = residual(&mut g, u, t, &x, &mut dn, &ResidualScales::IDENTITY, Dropout::off()).unwrap();
    assert_ne!(g.value(r.u_t), 0.0);
    assert_eq!(g.value(r.f), g.value(r.u_t));
}

#[test]
fn baseline_has_no_residual() {
    let mut g = Graph::new();
    let t = g.input(1.0);
    let err = residual(&mut g, t, t, &[], &mut DynamicsNodes::Baseline, &ResidualScales::IDENTITY, Dropout::off());
    assert!(matches!(err, Err(PinnError::InvalidConfig(_))));
}

#[test]
fn uxx_term_is_assembled() {
    let inputs: HpmInputs = "u,uxx".parse().unwrap();
    let hpm = crate::dynamics::DeepHpm::new(inputs, 2, 1, 4, 0.0, 1).unwrap();
    let sur = Mlp::xavier_normal(MlpConfig::new(3, 1, 6, 1), 3).unwrap();
    let mut g = Graph::new();
    let sn = sur.bind(&mut g);
    let mut dn = DynamicsState::Deephpm(hpm).bind(&mut g);
    let x = vec![g.input(0.2), g.input(0.7)];
    let t = g.input(0.1);
    let u = sn.forward(&mut g, &[x[0], x[1], t], Dropout::off()).unwrap()[0];
    let r = residual(&mut g, u, t, &x, &mut dn, &ResidualScales::IDENTITY, Dropout::off()).unwrap();
    assert!(g.value(r.f).is_finite() && g.value(r.f_t).is_finite());
}

#[test]
fn data_loss_examples() {
    let mut g = Graph::new();
    let p = g.input(0.8);
    let terms = loss_terms(&mut g, &[p], &[0.5], &[], Reduction::SumOfSquares).unwrap();
    assert!((g.value(terms.l_u) - 0.09).abs() < 1e-15);
    assert!(terms.l_f.is_none());

    let preds: Vec<_> = [0.1, 0.2, 0.3].iter().map(|&v| g.input(v)).collect();
    let perfect = loss_terms(&mut g, &preds, &[0.1, 0.2, 0.3], &[], Reduction::Mean).unwrap();
    assert_eq!(g.value(perfect.l_u), 0.0);

    let off = loss_terms(&mut g, &preds, &[0.0, 0.0, 0.0], &[], Reduction::Mean).unwrap();
    assert!((g.value(off.l_u) - (0.01 + 0.04 + 0.09) / 3.0).abs() < 1e-15);

    assert!(matches!(loss_terms(&mut g, &[], &[], &[], Reduction::Mean), Err(PinnError::EmptyTrainingSet)));
    assert!(matches!(
        loss_terms(&mut g, &[p], &[f64::NAN], &[], Reduction::Mean),
        Err(PinnError::NonFiniteSample { index: 0 })
    ));
}

fn frozen_terms(g: &mut Graph, l: [f64; 3]) -> LossTerms {
    LossTerms { l_u: g.constant(l[0]), l_f: Some(g.constant(l[1])), l_ft: Some(g.constant(l[2])) }
}

#[test]
fn total_loss_examples() {
    let mut g = Graph::new();
    let terms = frozen_terms(&mut g, [1.0, 2.0, 3.0]);
    let zero = [g.parameter(0.0), g.parameter(0.0), g.parameter(0.0)];
    let plain = total_loss(&mut g, &terms, zero, Balancing::AdpBal);
    assert!((g.value(plain) - 6.0).abs() < 1e-15);

    let lam = [g.parameter(0.0), g.parameter(2f64.ln()), g.parameter(4f64.ln())];
    let tot = total_loss(&mut g, &terms, lam, Balancing::AdpBal);
    let expect = 1.0 + 1.0 + 0.75 + 8f64.ln();
    assert!((g.value(tot) - expect).abs() < 1e-12);
    assert!((g.value(tot) - 4.829).abs() < 1e-3);

    let sum = total_loss(&mut g, &terms, lam, Balancing::Sum);
    assert_eq!(g.value(sum), 6.0);
    assert_eq!(g.gradient(sum, &lam).unwrap(), vec![0.0; 3]);
}

proptest! {
    #[test]
    fn total_is_linear_in_each_term(
        l in prop::array::uniform3(1e-4f64..1e3),
        lam in prop::array::uniform3(-5.0f64..5.0),
        delta in 1e-3f64..10.0,
        k in 0usize..3,
    ) {
        let mut g = Graph::new();
        let terms = frozen_terms(&mut g, l);
        let lam_ids = lam.map(|v| g.parameter(v));
        let base = total_loss(&mut g, &terms, lam_ids, Balancing::AdpBal);
        let mut bumped_l = l;
        bumped_l[k] += delta;
        let bumped_terms = frozen_terms(&mut g, bumped_l);
        let bumped = total_loss(&mut g, &bumped_terms, lam_ids, Balancing::AdpBal);
        let diff = g.value(bumped) - g.value(base);
        let coeff = (-lam[k]).exp();
        prop_assert!((diff - coeff * delta).abs() <= 1e-9 * (coeff * delta).max(g.value(base).abs()));
        // the coefficient is also the graph's partial derivative
        let d = g.gradient(base, &[terms.as_array()[k].unwrap()]).unwrap()[0];
        prop_assert!((d - coeff).abs() <= 1e-12 * coeff);
        prop_assert!(coeff > 0.0);
    }

    #[test]
    fn adpbal_stationary_point(l in 1e-6f64..1e6, k in 0usize..3) {
        // Newton on d total / d lambda'_k using the graph's first and second derivatives
        let mut vals = [1.0, 1.0, 1.0];
        vals[k] = l;
        let mut lam = 0.0;
        for _ in 0..200 {
            let mut g = Graph::new();
            let terms = frozen_terms(&mut g, vals);
            let mut ids = [g.parameter(0.0), g.parameter(0.0), g.parameter(0.0)];
            ids[k] = g.parameter(lam);
            let tot = total_loss(&mut g, &terms, ids, Balancing::AdpBal);
            let d1 = g.derive(tot, &[ids[k]], true).unwrap()[0];
            let d2 = g.gradient(d1, &[ids[k]]).unwrap()[0];
            let step = g.value(d1) / d2;
            lam -= step.clamp(-2.0, 2.0);
            if step.abs() < 1e-14 {
                break;
            }
        }
        prop_assert!(((-lam).exp() * l - 1.0).abs() < 1e-8, "lambda' {} for L {}", lam, l);
    }
}

fn toy_samples(n: usize, features: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let s = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let u = 0.5 * s + 0.2 * s * s;
            Sample { x: (0..features).map(|j| u * (j as f64 + 1.0) * 0.7 + 0.05 * s).collect(), t: s, y: u }
        })
        .collect()
}

fn toy_factors(features: usize) -> StandardizationFactors {
    StandardizationFactors {
        x_mean: vec![0.0; features],
        x_std: vec![1.0; features],
        t_mean: 200.0,
        t_std: 100.0,
        u_mean: 0.25,
        u_std: 0.1,
    }
}

fn small_config(dynamics: DynamicsConfig, balancing: Balancing) -> TrainConfig {
    TrainConfig {
        epochs: 5,
        batch_size: 4,
        learning_rate: 1e-2,
        seed: 7,
        balancing,
        dynamics,
        surrogate: SurrogateConfig { hidden_layers: 2, neurons: 6, dropout: 0.0, use_features: true },
        ..TrainConfig::default()
    }
}

fn fd_check(cfg: &TrainConfig, perturb_lambda: bool) {
    let data = toy_samples(5, 2);
    let batch: Vec<&Sample> = data.iter().collect();
    let factors = toy_factors(2);
    let mut tr = Trainer::new(cfg, &factors).unwrap();
    let mut p0 = tr.params().to_vec();
    if perturb_lambda {
        let n = p0.len();
        p0[n - 3..].copy_from_slice(&[0.3, -0.8, 1.1]);
    }
    tr.set_params(&p0).unwrap();
    let ev = tr.evaluate_batch::<ChaCha8Rng>(&batch, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = p0.len();
    // a random sample of network parameters plus every rate and lambda' parameter
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, n - 3, 12.min(n - 3)).into_vec();
    idx.extend(n.saturating_sub(3 + cfg_rate_params(cfg))..n);
    idx.sort();
    idx.dedup();
    let h = 1e-5;
    for i in idx {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        tr.set_params(&p).unwrap();
        let plus = tr.evaluate_batch::<ChaCha8Rng>(&batch, None).unwrap().total;
        p[i] = p0[i] - h;
        tr.set_params(&p).unwrap();
        let minus = tr.evaluate_batch::<ChaCha8Rng>(&batch, None).unwrap().total;
        let fd = (plus - minus) / (2.0 * h);
        let ad = ev.grad[i];
        assert!(
            (ad - fd).abs() <= 1e-3 * fd.abs().max(1e-6),
            "{}: autodiff {ad} vs fd {fd}",
            tr.layout().describe(i)
        );
    }
}

fn cfg_rate_params(cfg: &TrainConfig) -> usize {
    match cfg.dynamics {
        DynamicsConfig::Verhulst { .. } => 3,
        _ => 0,
    }
}

#[test]
fn total_loss_gradient_matches_fd_verhulst() {
    fd_check(&small_config(DynamicsConfig::verhulst(), Balancing::AdpBal), true);
    fd_check(&small_config(DynamicsConfig::verhulst(), Balancing::Sum), false);
}

#[test]
fn total_loss_gradient_matches_fd_deephpm() {
    let inputs: HpmInputs = "x,t,u,ux".parse().unwrap();
    let mut cfg = small_config(DynamicsConfig::deephpm(inputs, 1, 5), Balancing::AdpBal);
    cfg.reduction = Reduction::SumOfSquares;
    fd_check(&cfg, true);
}

#[test]
fn template_gradient_matches_explicit_batch_graph() {
    let cfg = small_config(DynamicsConfig::verhulst(), Balancing::AdpBal);
    let data = toy_samples(4, 2);
    let factors = toy_factors(2);
    let mut tr = Trainer::new(&cfg, &factors).unwrap();
    let mut p = tr.params().to_vec();
    let n = p.len();
    p[n - 3..].copy_from_slice(&[0.2, -1.0, 0.5]);
    tr.set_params(&p).unwrap();
    let batch: Vec<&Sample> = data.iter().collect();
    let ev = tr.evaluate_batch::<ChaCha8Rng>(&batch, None).unwrap();

    // same objective spelled out over the whole batch in one graph
    let (sur, dynamics, w) = tr.snapshot();
    let mut g = Graph::new();
    let sn = sur.bind(&mut g);
    let mut dn = dynamics.bind(&mut g);
    let lam = w.as_array().map(|v| g.parameter(v));
    let scales = ResidualScales::from_factors(&factors);
    let (mut preds, mut res) = (Vec::new(), Vec::new());
    for s in &data {
        let x: Vec<_> = s.x.iter().map(|&v| g.input(v)).collect();
        let t = g.input(s.t);
        let mut inp = x.clone();
        inp.push(t);
        let u = sn.forward(&mut g, &inp, Dropout::off()).unwrap()[0];
        preds.push(u);
        res.push(residual(&mut g, u, t, &x, &mut dn, &scales, Dropout::off()).unwrap());
    }
    let labels: Vec<f64> = data.iter().map(|s| s.y).collect();
    let terms = loss_terms(&mut g, &preds, &labels, &res, Reduction::Mean).unwrap();
    let tot = total_loss(&mut g, &terms, lam, Balancing::AdpBal);
    assert!((g.value(tot) - ev.total).abs() < 1e-12 * ev.total.abs().max(1.0));
    let mut ids = sn.param_ids();
    ids.extend(dn.param_ids());
    ids.extend(lam);
    let grad = g.gradient(tot, &ids).unwrap();
    for (i, (a, b)) in grad.iter().zip(&ev.grad).enumerate() {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-8), "{}: {a} vs {b}", tr.layout().describe(i));
    }
}

#[test]
fn zero_epochs_rejected() {
    let mut cfg = small_config(DynamicsConfig::Baseline, Balancing::Sum);
    cfg.epochs = 0;
    let data = toy_samples(6, 2);
    assert!(matches!(train(&data, &[], &toy_factors(2), &cfg), Err(PinnError::InvalidConfig(_))));
    cfg.epochs = 1;
    cfg.batch_size = 0;
    assert!(matches!(train(&data, &[], &toy_factors(2), &cfg), Err(PinnError::InvalidConfig(_))));
}

#[test]
fn feature_mismatch_and_empty_set_rejected() {
    let cfg = small_config(DynamicsConfig::Baseline, Balancing::Sum);
    assert!(matches!(train(&[], &[], &toy_factors(2), &cfg), Err(PinnError::EmptyTrainingSet)));
    let data = toy_samples(6, 3);
    assert!(matches!(train(&data, &[], &toy_factors(2), &cfg), Err(PinnError::FeatureMismatch { .. })));
}

#[test]
fn same_seed_gives_bit_identical_history() {
    let inputs: HpmInputs = "t,u".parse().unwrap();
    let mut cfg = small_config(DynamicsConfig::deephpm(inputs, 1, 4), Balancing::AdpBal);
    cfg.surrogate.dropout = 0.2;
    let data = toy_samples(10, 2);
    let val = toy_samples(4, 2);
    let a = train(&data, &val, &toy_factors(2), &cfg).unwrap();
    let b = train(&data, &val, &toy_factors(2), &cfg).unwrap();
    assert_eq!(a.history.len(), cfg.epochs);
    for (ra, rb) in a.history.iter().zip(&b.history) {
        assert_eq!(ra.l_u.to_bits(), rb.l_u.to_bits());
        assert_eq!(ra.l_f.to_bits(), rb.l_f.to_bits());
        assert_eq!(ra.total.to_bits(), rb.total.to_bits());
    }
    assert_eq!(a, b);
    cfg.seed += 1;
    let c = train(&data, &val, &toy_factors(2), &cfg).unwrap();
    assert_ne!(a.history[0].l_u, c.history[0].l_u);
}

#[test]
fn sum_mode_keeps_lambda_at_zero_and_baseline_ignores_physics() {
    let data = toy_samples(8, 2);
    let m = train(&data, &[], &toy_factors(2), &small_config(DynamicsConfig::verhulst(), Balancing::Sum)).unwrap();
    assert_eq!(m.loss_weights, LossWeights::default());
    let b = train(&data, &[], &toy_factors(2), &small_config(DynamicsConfig::Baseline, Balancing::AdpBal)).unwrap();
    assert!(b.history.iter().all(|r| r.l_f == 0.0 && r.l_ft == 0.0));
    assert_eq!(b.loss_weights.lambda_f, 0.0);
    assert_ne!(b.loss_weights.lambda_u, 0.0);
}

#[test]
fn validation_selection_keeps_best_epoch() {
    let data = toy_samples(12, 2);
    let val = toy_samples(5, 2);
    let mut cfg = small_config(DynamicsConfig::Baseline, Balancing::Sum);
    cfg.epochs = 30;
    let m = train(&data, &val, &toy_factors(2), &cfg).unwrap();
    let best = m.history.iter().map(|r| r.validation_l_u.unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(m.history[m.best_epoch - 1].validation_l_u, Some(best));
    let mse: f64 = val
        .iter()
        .map(|s| (m.predict_standardized(&s.x, s.t).unwrap() - s.y).powi(2))
        .sum::<f64>()
        / val.len() as f64;
    assert!((mse - best).abs() < 1e-15);
}

#[test]
fn physical_prediction_inverts_standardization() {
    let data = toy_samples(8, 2);
    let factors = toy_factors(2);
    let m = train(&data, &[], &factors, &small_config(DynamicsConfig::Baseline, Balancing::Sum)).unwrap();
    let raw_x: Vec<f64> = vec![0.3, -0.2];
    let t = 250.0;
    let z = factors.inputs(&raw_x, t);
    let expect = factors.unscale_u(m.predict_standardized(&z[..2], z[2]).unwrap());
    assert_eq!(m.predict(&raw_x, t).unwrap(), expect);
}

#[test]
fn checkpoint_round_trips_through_json() {
    let inputs: HpmInputs = "t".parse().unwrap();
    let data = toy_samples(6, 2);
    let m = train(&data, &[], &toy_factors(2), &small_config(DynamicsConfig::deephpm(inputs, 1, 3), Balancing::AdpBal))
        .unwrap();
    let text = serde_json::to_string(&m).unwrap();
    let back: TrainedModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
}

#[test]
fn config_parses_from_toml() {
    let text = r#"
        epochs = 10
        balancing = "sum"
        reduction = "sum-of-squares"
        [dynamics]
        kind = "deephpm"
        inputs = "t,u,ux"
        [surrogate]
        neurons = 64
    "#;
    let cfg: TrainConfig = toml::from_str(text).unwrap();
    assert_eq!(cfg.epochs, 10);
    assert_eq!(cfg.batch_size, 1024);
    assert_eq!(cfg.reduction, Reduction::SumOfSquares);
    assert_eq!(cfg.surrogate.neurons, 64);
    assert_eq!(cfg.surrogate.hidden_layers, 2);
    match &cfg.dynamics {
        DynamicsConfig::Deephpm { inputs, hidden_layers, .. } => {
            assert_eq!(inputs.to_string(), "t,u,ux");
            assert_eq!(*hidden_layers, 2);
        }
        other => panic!("{other:?}"),
    }
    let v: TrainConfig = toml::from_str("[dynamics]\nkind = \"verhulst\"\nk_init = 0.7").unwrap();
    assert!(matches!(v.dynamics, DynamicsConfig::Verhulst { k_init, u0, .. } if k_init == 0.7 && u0 == 0.1));
    let bad: TrainConfig = toml::from_str("[dynamics]\nkind = \"verhulst\"\nc_init = 0.2").unwrap();
    assert!(bad.validate().is_err());
}
