use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::fdlp::{apply_gain, EnvelopeMatrix, Grid};

fn random_env(t: usize, q: usize, seed: u64) -> EnvelopeMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..t * q)
        .map(|_| rng.gen_range(-6.0f64..0.0).exp())
        .collect();
    EnvelopeMatrix::full(Grid::from_vec(t, q, data).unwrap()).unwrap()
}

fn desk() -> EnhancerConfig {
    let mut c = EnhancerConfig::desk();
    c.input_offset = -3.0;
    c.input_spread = 1.7;
    c
}

fn example(t: usize, seed: u64, config: &EnhancerConfig) -> TrainingExample {
    TrainingExample::new(
        random_env(t, 36, seed),
        random_env(t, 36, seed + 100),
        config,
    )
    .unwrap()
}

fn total_loss(ex: &TrainingExample, p: &EnhancerParams, c: &EnhancerConfig) -> f64 {
    let lg = forward_cached(&ex.reverb, p, c, None).unwrap();
    loss_from_log_gain(&lg, &ex.target, c.reg_weight)
        .unwrap()
        .total
}

/// Clean envelopes within a factor e^±0.3 of the reverberant ones keep the
/// loss small, so finite-difference roundoff stays far below the tolerance.
fn near_example(t: usize, seed: u64, config: &EnhancerConfig) -> TrainingExample {
    let reverb = random_env(t, 36, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let clean: Vec<f64> = reverb
        .values()
        .as_slice()
        .iter()
        .map(|v| v * rng.gen_range(-0.3f64..0.3).exp())
        .collect();
    let clean = EnvelopeMatrix::full(Grid::from_vec(t, 36, clean).unwrap()).unwrap();
    TrainingExample::new(reverb, clean, config).unwrap()
}

#[test]
fn analytic_gradient_matches_central_differences_everywhere() {
    let c = desk();
    let ex = near_example(12, 1, &c);
    let mut p = EnhancerParams::init(&c, 7).unwrap();
    // Non-trivial output scale so every path carries signal.
    for (k, v) in p.tensors.last_mut().unwrap().data.iter_mut().enumerate() {
        *v = 0.5 + 0.05 * k as f64;
    }
    let (_, grads) = loss_and_grad(&ex, &p, &c).unwrap();
    let h = 1e-5;
    let mut worst = (0.0f64, String::new());
    for ti in 0..p.tensors.len() {
        for k in 0..p.tensors[ti].data.len() {
            let orig = p.tensors[ti].data[k];
            p.tensors[ti].data[k] = orig + h;
            let up = total_loss(&ex, &p, &c);
            p.tensors[ti].data[k] = orig - h;
            let dn = total_loss(&ex, &p, &c);
            p.tensors[ti].data[k] = orig;
            let num = (up - dn) / (2.0 * h);
            let a = grads.tensors[ti].data[k];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!(
                        "{}[{k}]: analytic {a:e}, numeric {num:e}",
                        p.tensors[ti].name
                    ),
                );
            }
        }
    }
    assert!(
        worst.0 < 1e-4,
        "worst relative error {} at {}",
        worst.0,
        worst.1
    );
}

#[test]
fn zeroed_final_layer_is_identity() {
    let c = desk();
    let env = random_env(40, 36, 3);
    let mut p = EnhancerParams::init(&c, 2).unwrap();
    p.zero_final_layer(&c);
    let g = forward(&env, &p, &c).unwrap();
    assert!(g.values().as_slice().iter().all(|v| *v == 1.0));
    assert_eq!(enhance(&env, &p, &c).unwrap(), env);
    assert_eq!(apply_gain(&env, &g).unwrap(), env);
}

#[test]
fn gains_are_positive_and_deterministic() {
    let c = desk();
    let env = random_env(60, 36, 4);
    let p = EnhancerParams::init(&c, 9).unwrap();
    let a = forward(&env, &p, &c).unwrap();
    let b = forward(&env, &p, &c).unwrap();
    assert!(a
        .values()
        .as_slice()
        .iter()
        .all(|v| *v > 0.0 && v.is_finite()));
    let bits = |g: &crate::fdlp::GainMatrix| {
        g.values()
            .as_slice()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    let enhanced = enhance(&env, &p, &c).unwrap();
    assert!(enhanced.values().as_slice().iter().all(|v| *v >= 0.0));
}

#[test]
fn backward_requires_a_forward_pass() {
    let c = desk();
    let p = EnhancerParams::init(&c, 1).unwrap();
    let err = backward(&p, &c, &ForwardCache::default(), &Grid::zeros(10, 36)).unwrap_err();
    assert!(matches!(err, Error::ContractViolation(_)));
}

#[test]
fn wrong_band_count_is_rejected() {
    let c = desk();
    let p = EnhancerParams::init(&c, 1).unwrap();
    assert!(matches!(
        forward(&random_env(10, 20, 1), &p, &c),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn overflow_reports_the_layer() {
    let c = desk();
    let mut p = EnhancerParams::init(&c, 1).unwrap();
    p.tensors[2].data[0] = f64::INFINITY;
    match forward(&random_env(10, 36, 1), &p, &c) {
        Err(Error::NumericOverflow { layer, .. }) => assert_eq!(layer, 1),
        other => panic!("expected overflow, got {other:?}"),
    }
}

#[test]
fn gradient_is_linear_in_the_loss_scale() {
    let c = desk();
    let env = random_env(16, 36, 5);
    let p = EnhancerParams::init(&c, 3).unwrap();
    let mut cache = ForwardCache::default();
    forward_cached(&env, &p, &c, Some(&mut cache)).unwrap();
    let seed: Vec<f64> = (0..16 * 36).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
    let g1 = backward(
        &p,
        &c,
        &cache,
        &Grid::from_vec(16, 36, seed.clone()).unwrap(),
    )
    .unwrap();
    let doubled = Grid::from_vec(16, 36, seed.iter().map(|v| 2.0 * v).collect()).unwrap();
    let g2 = backward(&p, &c, &cache, &doubled).unwrap();
    for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }
}

#[test]
fn taps_that_only_see_padding_get_no_gradient() {
    // A single time step: every conv tap off the centre row reads padding.
    let c = desk();
    let env = random_env(1, 36, 6);
    let p = EnhancerParams::init(&c, 4).unwrap();
    let mut cache = ForwardCache::default();
    forward_cached(&env, &p, &c, Some(&mut cache)).unwrap();
    let g = backward(&p, &c, &cache, &Grid::filled(1, 36, 1.0)).unwrap();
    let w = g.get("conv0.weight").unwrap();
    let (kt, kq) = (w.shape[2], w.shape[3]);
    for (i, v) in w.data.iter().enumerate() {
        let dt = (i / kq) % kt;
        if dt != kt / 2 {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn full_scale_runs_forward_and_backward() {
    let c = EnhancerConfig::full();
    let ex = example(800, 8, &c);
    let p = EnhancerParams::init(&c, 1).unwrap();
    let (l, g) = loss_and_grad(&ex, &p, &c).unwrap();
    assert!(l.is_finite());
    assert!(g.is_finite());
    g.check_shapes(&c).unwrap();
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let mut c = desk();
    c.epochs = 3;
    c.adam.step_size = 3e-3;
    let train_set: Vec<_> = (0..4).map(|i| example(40, 10 + i, &c)).collect();
    let val_set = vec![example(40, 50, &c)];
    let a = train(&train_set, &val_set, &c, |_, _, _| Ok(())).unwrap();
    let b = train(&train_set, &val_set, &c, |_, _, _| Ok(())).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.best, b.best);
    assert_eq!(a.history.len(), 4);
    assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
}
