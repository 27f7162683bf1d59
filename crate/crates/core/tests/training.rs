use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use peb_pinn::model::{Backbone, Variant};
use peb_pinn::physics::{NonDimScheme, PhysicalConstants};
use peb_pinn::training::*;
use peb_pinn::Error;

fn scheme() -> NonDimScheme {
    NonDimScheme::new(&PhysicalConstants::default()).unwrap()
}

fn small(variant: Variant, iterations: usize) -> TrainConfig {
    let mut c = TrainConfig::new(variant);
    c.backbone = Backbone::new(variant).with_size(2, 8);
    c.iterations = iterations;
    c.n_int = 96;
    c.n_bnd = 24;
    c.chunk = 40;
    c
}

#[test]
fn adam_hand_steps() {
    let mut s = AdamState::new(1, 1e-3);
    let mut p = [0.0];
    adam_step(&mut s, &mut p, &[1.0]).unwrap();
    assert_eq!(s.t, 1);
    assert!((p[0] + 9.999_999_90e-4).abs() < 1e-13);
    assert_eq!(p[0], -1e-3 / (1.0 + 1e-8));
    adam_step(&mut s, &mut p, &[1.0]).unwrap();
    assert!((p[0] + 1.999_999_9e-3).abs() < 1e-10);
    assert!((p[0] + 2e-3 / (1.0 + 1e-8)).abs() < 1e-15);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut s = AdamState::new(3, 5e-4);
    let mut p = [0.5, -1.0, 2.0];
    for _ in 0..3 {
        adam_step(&mut s, &mut p, &[0.0; 3]).unwrap();
    }
    assert_eq!(p, [0.5, -1.0, 2.0]);
    assert!(s.m.iter().chain(&s.v).all(|&x| x == 0.0));
    assert_eq!(s.t, 3);
}

/// Straight-line Adam written independently of the library.
fn reference_adam(m: &mut [f64], v: &mut [f64], t: u64, lr: f64, theta: &mut [f64], g: &[f64]) {
    let t = t as f64;
    for k in 0..theta.len() {
        m[k] = 0.9 * m[k] + 0.1 * g[k];
        v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
        let mh = m[k] / (1.0 - 0.9f64.powf(t));
        let vh = v[k] / (1.0 - 0.999f64.powf(t));
        theta[k] -= lr * mh / (vh.sqrt() + 1e-8);
    }
}

#[test]
fn adam_matches_independent_reimplementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..100 {
        let n = 16;
        let t0: u64 = rng.gen_range(0..200);
        let lr = rng.gen_range(1e-5..1e-2);
        let mut s = AdamState::new(n, lr);
        s.t = t0;
        for k in 0..n {
            s.m[k] = rng.gen_range(-1.0..1.0);
            s.v[k] = rng.gen_range(0.0..2.0);
        }
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut m, mut v, mut th) = (s.m.clone(), s.v.clone(), theta.clone());
        adam_step(&mut s, &mut theta, &g).unwrap();
        reference_adam(&mut m, &mut v, t0 + 1, lr, &mut th, &g);
        for k in 0..n {
            assert!((theta[k] - th[k]).abs() <= 1e-14, "{} vs {}", theta[k], th[k]);
            assert!((s.m[k] - m[k]).abs() <= 1e-14);
            assert!((s.v[k] - v[k]).abs() <= 1e-14);
            assert!(s.v[k] >= 0.0);
        }
        assert_eq!(s.t, t0 + 1);
    }
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut s = AdamState::new(2, 1e-3);
    s.t = 41;
    let mut p = [0.0, 0.0];
    match adam_step(&mut s, &mut p, &[1.0, f64::NAN]) {
        Err(Error::TrainingAborted { iteration, .. }) => assert_eq!(iteration, 42),
        other => panic!("{other:?}"),
    }
    assert_eq!(s.t, 41);
    assert!(adam_step(&mut s, &mut p, &[1.0]).is_err());
}

#[test]
fn single_iteration_history() {
    let out = train(small(Variant::Pinn, 1), scheme()).unwrap();
    assert_eq!(out.history.records.len(), 1);
    let r = &out.history.records[0];
    assert_eq!(r.iteration, 1);
    assert!(r.loss_total.is_finite() && r.loss_total > 0.0);
    assert_eq!(r.loss_total, r.loss_pde + r.loss_bc);
}

#[test]
fn history_and_checkpoint_cadence() {
    let mut c = small(Variant::LnnPinn, 12);
    c.history_every = 5;
    c.checkpoint_every = 4;
    let out = train(c, scheme()).unwrap();
    let its: Vec<usize> = out.history.records.iter().map(|r| r.iteration).collect();
    assert_eq!(its, vec![1, 5, 10]);
    let cps: Vec<usize> = out.checkpoints.iter().map(|c| c.iteration).collect();
    assert_eq!(cps, vec![4, 8, 12]);
    assert_eq!(out.checkpoints[2].params, out.params);
}

#[test]
fn training_is_deterministic() {
    for v in Variant::ALL {
        let a = train(small(v, 3), scheme()).unwrap();
        let b = train(small(v, 3), scheme()).unwrap();
        let bits = |p: &[f64]| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params.flat), bits(&b.params.flat), "{v}");
        let losses = |o: &TrainOutcome| o.history.records.iter().map(|r| r.loss_total.to_bits()).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
    }
}

#[test]
fn threaded_reduction_matches_sequential() {
    let seq = train(small(Variant::LstmLnnPinn, 2), scheme()).unwrap();
    let mut c = small(Variant::LstmLnnPinn, 2);
    c.threads = 2;
    let par = train(c, scheme()).unwrap();
    assert_eq!(seq.params.flat, par.params.flat);
}

#[test]
fn checkpoint_round_trip_continues_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    let config = small(Variant::LstmPinn, 2);

    let mut first = Trainer::new(config.clone(), scheme()).unwrap();
    first.step().unwrap();
    first.checkpoint().save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, first.checkpoint());
    let mut resumed = Trainer::resume(config.clone(), scheme(), loaded).unwrap();
    resumed.step().unwrap();

    let straight = train(config.clone(), scheme()).unwrap();
    let bits = |p: &[f64]| p.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&resumed.params.flat), bits(&straight.params.flat));
    assert_eq!(resumed.steps_done(), 2);

    let mut other = config;
    other.backbone = Backbone::new(Variant::Pinn).with_size(2, 8);
    assert!(Trainer::resume(other, scheme(), Checkpoint::load(&path).unwrap()).is_err());
    std::fs::write(&path, "{\"backbone\": 3}").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small(Variant::Pinn, 0);
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    c.iterations = 1;
    c.lr = 0.0;
    assert!(c.validate().is_err());
    c.lr = 1e-3;
    c.clip = Some(-1.0);
    assert!(c.validate().is_err());
}

#[test]
fn diverging_training_aborts_with_the_iteration() {
    let mut c = small(Variant::Pinn, 50);
    c.lr = 1e300;
    match train(c, scheme()) {
        Err(Error::TrainingAborted { iteration, reason }) => {
            assert!(iteration >= 2, "{iteration}");
            assert!(!reason.is_empty());
        }
        other => panic!("expected an abort, got {:?}", other.map(|o| o.params.len())),
    }
}

#[test]
fn clipped_first_step_stays_within_lr() {
    let mut c = small(Variant::Pinn, 1);
    c.clip = Some(1e-6);
    c.lr = 1e-4;
    let t = Trainer::new(c.clone(), scheme()).unwrap();
    let before = t.params.flat.clone();
    let out = train(c, scheme()).unwrap();
    let lr = 1e-4;
    let steps: Vec<f64> = before.iter().zip(&out.params.flat).map(|(a, b)| (a - b).abs()).collect();
    assert!(steps.iter().any(|&d| d > 0.5 * lr));
    assert!(steps.iter().all(|&d| d <= lr * (1.0 + 1e-12)));
}
