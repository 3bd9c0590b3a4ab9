use super::*;
use crate::autodiff::Graph;
use crate::data::{featurize, read_dataset, read_feature_csv, write_dataset, write_feature_csv, FeatureConfig};
use crate::dynamics::{verhulst_rate, VerhulstParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOGISTIC: (f64, f64, f64, f64) = (0.01, 0.5, 0.05, 0.1);

#[test]
fn logistic_boundary_and_asymptote() {
    let (r, k, c, u0) = LOGISTIC;
    assert_eq!(logistic_closed_form(0.0, r, k, c, u0).unwrap(), u0);
    assert!((logistic_closed_form(40.0 / r, r, k, c, u0).unwrap() - k).abs() < 1e-15);
    assert!(logistic_closed_form(1.0, r, k, 0.2, u0).is_err());
    assert!(logistic_closed_form(1.0, r, 0.1, c, 0.1).is_err());
}

#[test]
fn closed_form_derivative_matches_verhulst_rate() {
    let (r, k, c, u0) = LOGISTIC;
    let p = VerhulstParams::from_physical(r, k, c, u0).unwrap();
    let a = (k - u0) / (u0 - c);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let tv = rng.random_range(0.0..800.0);
        let mut g = Graph::new();
        let t = g.input(tv);
        let rt = g.scale(t, -r);
        let e = g.exp(rt);
        let ae = g.scale(e, a);
        let den = g.offset(ae, 1.0);
        let num = g.constant(k - c);
        let frac = g.div(num, den);
        let u = g.offset(frac, c);
        assert_eq!(g.value(u), logistic_closed_form(tv, r, k, c, u0).unwrap());
        let du = g.gradient(u, &[t]).unwrap()[0];
        let mut nodes = p.bind(&mut g);
        let rate = verhulst_rate(&mut g, u, &mut nodes);
        assert!((du - g.value(rate)).abs() < 1e-10, "t={tv}: {du} vs {}", g.value(rate));
    }
}

#[test]
fn rk4_zero_rate_is_constant() {
    let tr = rk4_integrate(|_, _| 0.0, 0.3, (0.0, 10.0), 0.7).unwrap();
    assert!(tr.values.iter().all(|&u| u == 0.3));
    assert_eq!(*tr.times.last().unwrap(), 10.0);
    assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn rk4_errors() {
    assert!(matches!(rk4_integrate(|_, _| 0.0, 0.0, (0.0, 1.0), 0.0), Err(SynthError::InvalidStep(_))));
    assert!(matches!(rk4_integrate(|_, _| 0.0, 0.0, (0.0, 1.0), f64::NAN), Err(SynthError::InvalidStep(_))));
    let err = rk4_integrate(|t, _| if t > 2.0 { f64::NAN } else { 1.0 }, 0.0, (0.0, 5.0), 0.5).unwrap_err();
    match err {
        SynthError::NonFiniteRate { t, u } => assert!(t > 2.0 && u > 2.0),
        other => panic!("{other}"),
    }
}

#[test]
fn rk4_matches_closed_forms() {
    let laws = [
        Generator::default(),
        Generator::Exponential { r: 0.003, u0: 0.05 },
        Generator::Xu { theta: 5e-3, u0: 0.02 },
    ];
    for law in laws {
        let tr = rk4_integrate(|_, u| law.rate(u).unwrap(), law.u0(), (0.0, 500.0), 0.1).unwrap();
        assert_eq!(tr.len(), 5001);
        let err = tr.max_abs_error(|t| law.closed_form(t).unwrap());
        assert!(err < 1e-8, "{law}: {err}");
    }
}

#[test]
fn rk4_is_fourth_order() {
    // steps large enough that truncation error dominates rounding
    let law = Generator::Logistic { r: 0.05, k: 0.5, c: 0.05, u0: 0.1 };
    let steps = [8.0, 4.0, 2.0, 1.0];
    let errors: Vec<f64> = steps
        .iter()
        .map(|&h| {
            let tr = rk4_integrate(|_, u| law.rate(u).unwrap(), law.u0(), (0.0, 400.0), h).unwrap();
            tr.max_abs_error(|t| law.closed_form(t).unwrap())
        })
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio} from {errors:?}");
    }
    let order = convergence_order(&steps, &errors);
    assert!((3.5..=4.5).contains(&order), "order {order}");
}

#[test]
fn simple_rates() {
    assert_eq!(xu_rate(1.0, 0.3), 0.0);
    assert!((xu_rate(0.25, 0.4) - 0.3).abs() < 1e-16);
    assert!((exp_rate(0.2, 0.05) - 0.01).abs() < 1e-17);
    assert_eq!(logistic_rate(0.05, 0.01, 0.5, 0.05), 0.0);
    assert_eq!(logistic_rate(0.5, 0.01, 0.5, 0.05), 0.0);
}

#[test]
fn sp_rate_without_history_is_two_terms() {
    let p = SpModelParams::default();
    let [t1, t2, t3, t4, t5, _] = p.theta;
    let t = 37.0;
    let expect = t1 * t5 * (1.0 + t2 * t).powf(t3 / (2.0 - t3)) + t4 / t.sqrt();
    assert_eq!(sp_rate(t, &[], &p).unwrap(), expect);
    assert!(sp_rate(t, &[1.0, 2.0], &p).unwrap() > expect);
}

#[test]
fn sp_rate_rejects_bad_inputs() {
    let p = SpModelParams::default();
    assert!(sp_rate(0.0, &[], &p).is_err());
    assert!(sp_rate(-1.0, &[], &p).is_err());
    assert!(sp_rate(5.0, &[2.0, 2.0], &p).is_err());
    assert!(sp_rate(5.0, &[3.0, 2.0], &p).is_err());
    assert!(sp_rate(5.0, &[5.0], &p).is_err());
    let bad = SpModelParams { theta: [1.0, 1.0, 2.0, 1.0, 1.0, 1.0], t1: 1.0 };
    assert!(sp_rate(5.0, &[], &bad).is_err());
}

#[test]
fn sp_trajectory_decelerates_then_runs_nearly_linear() {
    let law = Generator::Sp { params: SpModelParams::default(), u0: 0.0 };
    let tr = law.trajectory(1500).unwrap();
    let inc: Vec<f64> = tr.values.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(inc.iter().all(|&d| d > 0.0));
    // early increments shrink quickly
    assert!(inc[0] > 3.0 * inc[50]);
    // late increments vary by a few percent at most
    let late = &inc[1000..];
    let (lo, hi) = late.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &d| (l.min(d), h.max(d)));
    assert!(hi / lo < 1.1, "late increments {lo}..{hi}");
}

#[test]
fn noiseless_single_cell_equals_closed_form() {
    let cfg = SynthConfig { cells: 1, noise_std: 0.0, feature_noise_std: 0.0, truncate_at_eol: false, ..Default::default() };
    let ds = generate_dataset(&cfg).unwrap();
    let law = Generator::default();
    assert_eq!(ds.cells[0].rows.len(), 500);
    for row in &ds.cells[0].rows {
        assert_eq!(row.pcl, law.closed_form(row.t()).unwrap());
        assert_eq!(row.x[0], row.pcl);
    }
}

#[test]
fn zero_heterogeneity_gives_identical_truth() {
    let cfg = SynthConfig { cells: 2, ..Default::default() };
    let ds = generate_dataset(&cfg).unwrap();
    assert_eq!(ds.truth[0].values, ds.truth[1].values);
    assert_eq!(ds.generators[0], ds.generators[1]);
    // the noise draws are per cell
    assert_ne!(ds.cells[0].rows[3].pcl, ds.cells[1].rows[3].pcl);
    assert_eq!(generate_dataset(&cfg).unwrap(), ds);
}

#[test]
fn rate_spread_spreads_eol() {
    let cfg = SynthConfig { cells: 10, heterogeneity: 0.2, noise_std: 0.0, ..Default::default() };
    let ds = generate_dataset(&cfg).unwrap();
    let eols: Vec<u32> = ds.cells.iter().map(|c| c.eol.unwrap()).collect();
    let spread = eols.iter().max().unwrap() - eols.iter().min().unwrap();
    assert!(spread > 0, "{eols:?}");
    // faster cells reach end of life no later
    let rate = |g: &Generator| match g {
        Generator::Logistic { r, .. } => *r,
        _ => unreachable!(),
    };
    for (ga, ca) in ds.generators.iter().zip(&ds.cells) {
        for (gb, cb) in ds.generators.iter().zip(&ds.cells) {
            if rate(ga) > rate(gb) {
                assert!(ca.eol <= cb.eol);
            }
        }
    }
}

#[test]
fn truncation_and_rul_labels() {
    let ds = generate_dataset(&SynthConfig { noise_std: 0.0, ..Default::default() }).unwrap();
    for cell in &ds.cells {
        let eol = cell.eol.unwrap();
        // A = 8, so u reaches 0.2 at t = ln(4) / r
        assert_eq!(eol, (4f64.ln() / 0.01).ceil() as u32);
        assert_eq!(cell.rows.last().unwrap().cycle, eol);
        for w in cell.rows.windows(2) {
            assert_eq!(w[0].rul.unwrap() - w[1].rul.unwrap(), 1.0);
        }
        assert_eq!(cell.rows.last().unwrap().rul, Some(0.0));
    }
}

#[test]
fn generated_rows_round_trip_through_csv() {
    let ds = generate_dataset(&SynthConfig { heterogeneity: 0.1, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    let rows = ds.rows();
    write_feature_csv(&path, &rows).unwrap();
    assert_eq!(read_feature_csv(&path).unwrap(), rows);
}

#[test]
fn invalid_configs_rejected() {
    let bad = [
        SynthConfig { cells: 0, ..Default::default() },
        SynthConfig { channels: 9, ..Default::default() },
        SynthConfig { heterogeneity: 1.5, ..Default::default() },
        SynthConfig { ids: vec!["a".into()], ..Default::default() },
        SynthConfig { generator: Generator::Logistic { r: 0.01, k: 0.5, c: 0.2, u0: 0.1 }, ..Default::default() },
    ];
    for cfg in bad {
        assert!(generate_dataset(&cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn exhausted_capacity_stops_trajectory() {
    let tr = Generator::Exponential { r: 0.05, u0: 0.1 }.trajectory(500).unwrap();
    assert!(tr.len() < 500);
    assert!(tr.values.iter().all(|&u| (0.0..1.0).contains(&u)));
}

#[test]
fn raw_extract_featurizes_with_informative_features() {
    let cfg = RawConfig {
        synth: SynthConfig {
            generator: Generator::Logistic { r: 0.03, k: 0.5, c: 0.05, u0: 0.1 },
            cells: 2,
            cycles: 90,
            ..Default::default()
        },
        ..Default::default()
    };
    let (manifest, cells) = generate_raw(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &manifest, &cells).unwrap();
    let (m2, back) = read_dataset(dir.path()).unwrap();
    assert_eq!(m2, manifest);
    assert_eq!(back.len(), 2);
    let feats = featurize(&back, &FeatureConfig::default()).unwrap();
    for cell in &feats {
        let eol = cell.eol.expect("reaches end of life");
        assert_eq!(cell.rows.len() as u32, eol);
        // the resistance channel tracks PCL
        let first = &cell.rows[10];
        let last = cell.rows.last().unwrap();
        assert!(last.x[6] > first.x[6]);
        assert!(last.x.iter().zip(&first.x).filter(|(a, b)| a != b).count() >= 6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_trajectories_are_monotone(
        r in 1e-3f64..0.05,
        k in 0.3f64..0.95,
        c in 0.0f64..0.08,
        theta in 1e-4f64..0.02,
        re in 1e-4f64..0.01,
    ) {
        let laws = [
            Generator::Logistic { r, k, c, u0: 0.1 },
            Generator::Exponential { r: re, u0: 0.05 },
            Generator::Xu { theta, u0: 0.02 },
            Generator::Sp { params: SpModelParams::default(), u0: 0.0 },
        ];
        for law in laws {
            let tr = law.trajectory(400).unwrap();
            prop_assert!(tr.values.windows(2).all(|w| w[1] >= w[0]), "{}", law);
            prop_assert!(tr.values.iter().all(|&u| (0.0..1.0).contains(&u)));
        }
    }

    #[test]
    fn rk4_logistic_within_tolerance(r in 1e-3f64..0.03, k in 0.3f64..0.9) {
        let law = Generator::Logistic { r, k, c: 0.05, u0: 0.1 };
        let tr = rk4_integrate(|_, u| law.rate(u).unwrap(), 0.1, (0.0, 500.0), 0.1).unwrap();
        prop_assert!(tr.max_abs_error(|t| law.closed_form(t).unwrap()) < 1e-8);
    }
}
