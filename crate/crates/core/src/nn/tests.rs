use super::*;
use crate::autodiff::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn config_bounds_are_checked() {
    assert!(MlpConfig::new(3, 0, 8, 1).validate().is_err());
    assert!(MlpConfig::new(3, 1, 0, 1).validate().is_err());
    assert!(MlpConfig::new(3, 1, 8, 0).validate().is_err());
    assert!(MlpConfig::new(3, 1, 8, 1).with_dropout(1.0).validate().is_err());
    assert!(MlpConfig::new(3, 2, 8, 1).with_dropout(0.2).validate().is_ok());
}

#[test]
fn parameter_count_matches_formula() {
    let cfg = MlpConfig::new(9, 3, 17, 2);
    let expect = (9 + 1) * 17 + (17 + 1) * 17 * 2 + (17 + 1) * 2;
    assert_eq!(cfg.parameter_count(), expect);
    let net = Mlp::xavier_normal(cfg, 1).unwrap();
    assert_eq!(net.params.len(), expect);
    assert_eq!(net.layout().len(), expect);
}

#[test]
fn xavier_variance_of_square_layer() {
    let net = Mlp::xavier_normal(MlpConfig::new(128, 1, 128, 1), 42).unwrap();
    let w = &net.params[..128 * 128];
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    let target = 2.0 / 256.0;
    assert!(var > 0.8 * target && var < 1.2 * target, "variance {var}");
}

#[test]
fn xavier_biases_are_zero_and_init_is_deterministic() {
    let cfg = MlpConfig::new(4, 2, 16, 1);
    let a = Mlp::xavier_normal(cfg.clone(), 9).unwrap();
    let b = Mlp::xavier_normal(cfg.clone(), 9).unwrap();
    let c = Mlp::xavier_normal(cfg.clone(), 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.params, c.params);
    let mut offset = 0;
    for (fan_in, fan_out) in cfg.layer_dims() {
        offset += fan_in * fan_out;
        assert!(a.params[offset..offset + fan_out].iter().all(|&x| x == 0.0));
        offset += fan_out;
    }
}

#[test]
fn zero_weights_give_output_bias() {
    let cfg = MlpConfig::new(3, 2, 5, 1);
    let mut params = vec![0.0; cfg.parameter_count()];
    *params.last_mut().unwrap() = 0.75;
    let net = Mlp::from_params(cfg, 0, params).unwrap();
    for x in [[0.0, 0.0, 0.0], [1.0, -3.0, 9.0]] {
        assert_eq!(net.predict(&x).unwrap(), vec![0.75]);
        let mut g = Graph::new();
        let nodes = net.bind(&mut g);
        let inputs: Vec<_> = x.iter().map(|&v| g.input(v)).collect();
        let out = nodes.forward(&mut g, &inputs, Dropout::off()).unwrap();
        assert_eq!(g.value(out[0]), 0.75);
    }
}

#[test]
fn forward_rejects_wrong_input_length() {
    let net = Mlp::xavier_normal(MlpConfig::new(3, 1, 4, 1), 0).unwrap();
    let mut g = Graph::new();
    let nodes = net.bind(&mut g);
    let x = g.input(1.0);
    assert_eq!(
        nodes.forward(&mut g, &[x], Dropout::off()).unwrap_err(),
        NnError::DimensionMismatch { expected: 3, got: 1 }
    );
    assert!(net.predict(&[1.0]).is_err());
}

#[test]
fn eval_mode_is_deterministic_and_matches_predict() {
    let net = Mlp::xavier_normal(MlpConfig::new(2, 2, 8, 1).with_dropout(0.3), 5).unwrap();
    let x = [0.2, -0.4];
    let run = || {
        let mut g = Graph::new();
        let nodes = net.bind(&mut g);
        let inputs: Vec<_> = x.iter().map(|&v| g.input(v)).collect();
        let out = nodes.forward(&mut g, &inputs, Dropout::off()).unwrap();
        g.value(out[0])
    };
    let a = run();
    assert_eq!(a.to_bits(), run().to_bits());
    assert!((a - net.predict(&x).unwrap()[0]).abs() < 1e-14);
}

#[test]
fn mask_leaves_of_ones_are_identity() {
    let net = Mlp::xavier_normal(MlpConfig::new(2, 3, 6, 1).with_dropout(0.2), 5).unwrap();
    let mut g = Graph::new();
    let nodes = net.bind(&mut g);
    let masks = nodes.mask_leaves(&mut g);
    let inputs = [g.input(0.5), g.input(-1.0)];
    let out = nodes.forward::<ChaCha8Rng>(&mut g, &inputs, Dropout::Masks(&masks)).unwrap();
    assert!((g.value(out[0]) - net.predict(&[0.5, -1.0]).unwrap()[0]).abs() < 1e-14);
}

#[test]
fn inverted_dropout_is_unbiased() {
    // one hidden layer, linear output: E[out] equals the eval-mode output
    let net = Mlp::xavier_normal(MlpConfig::new(2, 1, 16, 1).with_dropout(0.2), 3).unwrap();
    let x = [0.7, -0.2];
    let eval = net.predict(&x).unwrap()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut g = Graph::new();
        let nodes = net.bind(&mut g);
        let inputs: Vec<_> = x.iter().map(|&v| g.input(v)).collect();
        let out = nodes.forward(&mut g, &inputs, Dropout::Sample(&mut rng)).unwrap();
        samples.push(g.value(out[0]));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!(se > 0.0);
    assert!((mean - eval).abs() < 3.0 * se, "mean {mean} eval {eval} se {se}");
}

#[test]
fn sampled_masks_use_inverted_scaling() {
    let net = Mlp::xavier_normal(MlpConfig::new(2, 2, 50, 1).with_dropout(0.25), 3).unwrap();
    let mut g = Graph::new();
    let nodes = net.bind(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let masks = nodes.sample_masks(&mut rng);
    assert_eq!(masks.len(), 2);
    for m in masks.iter().flatten() {
        assert!(*m == 0.0 || (*m - 1.0 / 0.75).abs() < 1e-15);
    }
}

#[test]
fn weight_gradients_match_finite_differences() {
    let cfg = MlpConfig::new(3, 2, 6, 1);
    let net = Mlp::xavier_normal(cfg.clone(), 17).unwrap();
    let x = [0.3, -0.8, 1.1];
    let mut g = Graph::new();
    let nodes = net.bind(&mut g);
    let inputs: Vec<_> = x.iter().map(|&v| g.input(v)).collect();
    let out = nodes.forward(&mut g, &inputs, Dropout::off()).unwrap()[0];
    let grads = g.gradient(out, &nodes.param_ids()).unwrap();
    let h = 1e-4;
    for (i, &ad) in grads.iter().enumerate() {
        let mut p = net.clone();
        p.params[i] += h;
        let plus = p.predict(&x).unwrap()[0];
        p.params[i] -= 2.0 * h;
        let minus = p.predict(&x).unwrap()[0];
        let fd = (plus - minus) / (2.0 * h);
        assert!((ad - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "param {i}: {ad} vs {fd}");
    }
}

#[test]
fn adam_converges_on_quadratic() {
    let mut w = [0.0];
    let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1), 1);
    let layout = ParamLayout::new();
    for _ in 0..2000 {
        let g = [2.0 * (w[0] - 3.0)];
        opt.step(&mut w, &g, &layout).unwrap();
    }
    assert!((w[0] - 3.0).abs() < 1e-3, "w = {}", w[0]);
    assert_eq!(opt.steps(), 2000);
}

#[test]
fn adam_zero_gradient_is_fixed_point() {
    let mut w = [1.5, -2.0];
    let mut opt = Adam::new(AdamConfig::default(), 2);
    opt.step(&mut w, &[0.0, 0.0], &ParamLayout::new()).unwrap();
    assert_eq!(w, [1.5, -2.0]);
}

#[test]
fn adam_first_step_is_lr_times_sign() {
    let lr = 0.01;
    let mut w = [0.0, 0.0, 0.0];
    let g = [3.0, -0.5, 1e-3];
    let mut opt = Adam::new(AdamConfig::with_learning_rate(lr), 3);
    opt.step(&mut w, &g, &ParamLayout::new()).unwrap();
    for (wi, gi) in w.iter().zip(&g) {
        // m_hat = g, v_hat = g^2: step = lr * g / (|g| + eps)
        let expect = -lr * gi / (gi.abs() + 1e-8);
        assert!((wi - expect).abs() < 1e-15);
        assert!((wi.abs() - lr).abs() < lr * 1e-4);
    }
}

#[test]
fn adam_rejects_non_finite_gradient_naming_parameter() {
    let net = Mlp::xavier_normal(MlpConfig::new(2, 1, 3, 1), 0).unwrap();
    let mut layout = ParamLayout::new();
    layout.extend("surrogate", &net.layout());
    let mut params = net.params.clone();
    let mut grads = vec![0.1; params.len()];
    grads[7] = f64::NAN;
    let mut opt = Adam::new(AdamConfig::default(), params.len());
    let err = opt.step(&mut params, &grads, &layout).unwrap_err();
    match err {
        NnError::NonFiniteGradient { param, .. } => assert_eq!(param, "surrogate.l0.bias[1]"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(params, net.params);
    assert_eq!(opt.steps(), 0);
}
