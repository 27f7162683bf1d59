use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::gated_nodes;
use super::*;
use crate::autodiff::{jet_seed, Activation, Axis, Jet2, JetTensor, Tape};

fn scalar_layer(kind: LayerKind, input_width: usize, width: usize) -> ModelParams {
    let spec = LayerSpec {
        kind,
        input_width,
        width,
        activation: Activation::Tanh,
    };
    let variant = match kind {
        LayerKind::Dense => Variant::Pinn,
        LayerKind::Liquid => Variant::LnnPinn,
        LayerKind::Gated => Variant::LstmPinn,
        LayerKind::GatedLiquid => Variant::LstmLnnPinn,
    };
    let backbone = Backbone::new(variant).with_size(1, width);
    ModelParams::zeros(backbone, Layout::from_specs(&[spec], 1))
}

fn set(p: &mut ModelParams, name: &str, values: &[f64]) {
    p.block_mut(name).unwrap().copy_from_slice(values);
}

#[test]
fn liquid_zero_weights_give_zero() {
    let mut p = scalar_layer(LayerKind::Liquid, 2, 3);
    set(&mut p, "layer1.lambda_raw", &[LAMBDA_RAW_INIT; 3]);
    let x = [jet_seed(0.3, Axis::X), jet_seed(-0.1, Axis::Y)];
    let h = liquid_step(&p.layout.layers[0], &p.flat, &x, &[Jet2::ZERO; 3]).unwrap();
    assert!(h.iter().all(|j| *j == Jet2::ZERO));
}

#[test]
fn liquid_full_retention_returns_previous_state() {
    // α = e^{-λ} → 1 as λ → 0, i.e. λ_raw → −∞.
    let mut p = scalar_layer(LayerKind::Liquid, 1, 2);
    set(&mut p, "layer1.lambda_raw", &[-60.0, -60.0]);
    set(&mut p, "layer1.W_in", &[3.0, -2.0]);
    set(&mut p, "layer1.W_recur", &[0.5, 1.0, -1.0, 0.25]);
    let h0 = [Jet2::constant(0.7), Jet2::constant(-0.2)];
    let h = liquid_step(&p.layout.layers[0], &p.flat, &[Jet2::constant(0.9)], &h0).unwrap();
    for (a, b) in h.iter().zip(&h0) {
        assert!((a.v - b.v).abs() < 1e-12);
    }
}

#[test]
fn liquid_scalar_hand_value() {
    let mut p = scalar_layer(LayerKind::Liquid, 1, 1);
    set(&mut p, "layer1.lambda_raw", &[LAMBDA_RAW_INIT]);
    set(&mut p, "layer1.W_in", &[1.0]);
    let h = liquid_step(&p.layout.layers[0], &p.flat, &[Jet2::constant(0.5)], &[Jet2::ZERO]).unwrap();
    // Hand evaluation: (1 − e^{−1}) · tanh(0.5)
    let oracle = (1.0 - (-1.0f64).exp()) * 0.5f64.tanh();
    assert!((oracle - 0.292_114).abs() < 5e-7);
    assert!((h[0].v - oracle).abs() < 1e-15);
}

#[test]
fn gated_zero_weights() {
    let p = scalar_layer(LayerKind::Gated, 2, 2);
    let mut tape = Tape::new(&p.flat);
    let x = tape.constant_jets(JetTensor::from_jets(1, 2, &[jet_seed(0.4, Axis::X), jet_seed(0.2, Axis::Y)]));
    let g = gated_nodes(&mut tape, &p.layout.layers[0], x, H0::Zero).unwrap();
    for gate in [g.input_gate, g.forget_gate, g.output_gate] {
        assert!(tape.jets(gate).unwrap().to_jets().iter().all(|j| *j == Jet2::constant(0.5)));
    }
    for n in [g.candidate, g.cell, g.hidden] {
        assert!(tape.jets(n).unwrap().to_jets().iter().all(|j| *j == Jet2::ZERO));
    }
}

#[test]
fn gated_output_gate_shutoff() {
    let mut p = scalar_layer(LayerKind::Gated, 1, 1);
    set(&mut p, "layer1.b_o", &[-800.0]);
    set(&mut p, "layer1.b_c", &[2.0]);
    set(&mut p, "layer1.c0", &[3.0]);
    let (h, c) = gated_step(&p.layout.layers[0], &p.flat, &[Jet2::constant(1.0)], &[Jet2::ZERO]).unwrap();
    assert!(c[0].v.abs() > 1.0);
    assert_eq!(h[0].v, 0.0);
}

#[test]
fn gated_scalar_hand_value() {
    let mut p = scalar_layer(LayerKind::Gated, 1, 1);
    set(&mut p, "layer1.b_c", &[0.8f64.atanh()]);
    set(&mut p, "layer1.b_o", &[40.0]);
    let (h, c) = gated_step(&p.layout.layers[0], &p.flat, &[Jet2::constant(0.3)], &[Jet2::ZERO]).unwrap();
    // c = σ(0)·0 + σ(0)·0.8, h ≈ tanh(0.4)
    assert!((c[0].v - 0.4).abs() < 1e-15);
    assert!((h[0].v - 0.4f64.tanh()).abs() < 1e-15);
    assert!((h[0].v - 0.379_949).abs() < 5e-7);
}

#[test]
fn zero_readout_gives_zero_output() {
    for v in Variant::ALL {
        let mut p = ModelParams::init(Backbone::new(v).with_size(2, 8), 4);
        set(&mut p, "readout.W_out", &[0.0; 8]);
        let out = p.forward(jet_seed(0.3, Axis::X), jet_seed(-0.6, Axis::Y)).unwrap();
        assert_eq!(out, vec![Jet2::ZERO]);
    }
}

#[test]
fn single_tanh_unit_closed_form() {
    let mut p = ModelParams::zeros(
        Backbone::new(Variant::Pinn).with_size(1, 1),
        Layout::for_backbone(&Backbone::new(Variant::Pinn).with_size(1, 1)),
    );
    set(&mut p, "layer1.W", &[1.0, 0.0]);
    set(&mut p, "readout.W_out", &[1.0]);
    for &x in &[-1.0, -0.25, 0.0, 0.6] {
        let u = p.forward(jet_seed(x, Axis::X), jet_seed(0.4, Axis::Y)).unwrap()[0];
        let t = f64::tanh(x);
        let s = 1.0 - t * t;
        assert_eq!(u.v, t);
        assert!((u.gx - s).abs() < 1e-15);
        assert!((u.hxx + 2.0 * t * s).abs() < 1e-15);
        assert_eq!((u.gy, u.hxy, u.hyy), (0.0, 0.0, 0.0));
    }
}

fn five_point_laplacian(p: &ModelParams, x: f64, y: f64, h: f64) -> f64 {
    let u = |a: f64, b: f64| p.forward(Jet2::constant(a), Jet2::constant(b)).unwrap()[0].v;
    (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h)
}

#[test]
fn gated_liquid_laplacian_matches_stencil() {
    let p = ModelParams::init(Backbone::new(Variant::LstmLnnPinn), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut num, mut den) = (0.0, 0.0);
    for _ in 0..8 {
        let (x, y) = (rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
        let lap = p.forward(jet_seed(x, Axis::X), jet_seed(y, Axis::Y)).unwrap()[0].laplacian();
        let fd = five_point_laplacian(&p, x, y, 1e-4);
        num += (lap - fd).powi(2);
        den += fd * fd;
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-5, "relative error {rel:e}");
}

#[test]
fn gate_activations_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in [Variant::LstmPinn, Variant::LstmLnnPinn] {
        let mut p = ModelParams::init(Backbone::new(v).with_size(2, 16), 21);
        for w in p.flat.iter_mut() {
            *w += rng.gen_range(-1.0..1.0);
        }
        let pts: Vec<[f64; 2]> = (0..64).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let mut tape = Tape::new(&p.flat);
        let c = tape.constant_jets(seed_points(&pts));
        let g = gated_nodes(&mut tape, &p.layout.layers[0], c, H0::Zero).unwrap();
        for gate in [g.input_gate, g.forget_gate, g.output_gate] {
            let t = tape.jets(gate).unwrap();
            assert!(t.channel(crate::autodiff::Channel::V).iter().all(|&s| s > 0.0 && s < 1.0));
        }
        let cand = tape.jets(g.candidate).unwrap();
        assert!(cand.channel(crate::autodiff::Channel::V).iter().all(|&s| s > -1.0 && s < 1.0));
    }
}

#[test]
fn liquid_diagonal_sensitivity_at_zero_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 4;
    let mut p = scalar_layer(LayerKind::Liquid, 2, d);
    for v in p.flat.iter_mut() {
        *v = rng.gen_range(-1.5..1.5);
    }
    let layer = p.layout.layers[0].clone();
    let lam = p.leak(0).unwrap();
    let w_recur = p.block("layer1.W_recur").unwrap().to_vec();
    let b = p.block("layer1.b_in").unwrap().to_vec();
    for i in 0..d {
        let mut h0 = vec![Jet2::ZERO; d];
        h0[i] = jet_seed(0.0, Axis::X);
        let h = liquid_step(&layer, &p.flat, &[Jet2::ZERO; 2], &h0).unwrap();
        let alpha = (-lam[i]).exp();
        let wii = w_recur[i * d + i];
        let sens = h[i].gx;
        let closed = alpha + (1.0 - alpha) * wii * (1.0 - b[i].tanh().powi(2));
        assert!((sens - closed).abs() < 1e-14);
        assert!(sens.abs() <= alpha + (1.0 - alpha) * wii.abs() + 1e-15);
    }
}

#[test]
fn frozen_gates_reduce_to_liquid_backbone() {
    let d = 6;
    let liquid = ModelParams::init(Backbone::new(Variant::LnnPinn).with_size(2, d), 8);
    let mut small = liquid.clone();
    for name in ["layer1.W_in", "layer1.W_recur", "layer2.W_in", "layer2.W_recur"] {
        for w in small.block_mut(name).unwrap() {
            *w *= 1e-3;
        }
    }
    let mut fused = ModelParams::init(Backbone::new(Variant::LstmLnnPinn).with_size(2, d), 0);
    for w in fused.flat.iter_mut() {
        *w = 0.0;
    }
    for l in 1..=2 {
        let copy = |f: &mut ModelParams, to: &str, from: &str| {
            let src = small.block(from).unwrap().to_vec();
            f.block_mut(to).unwrap().copy_from_slice(&src);
        };
        copy(&mut fused, &format!("layer{l}.W_c"), &format!("layer{l}.W_in"));
        copy(&mut fused, &format!("layer{l}.U_c"), &format!("layer{l}.W_recur"));
        copy(&mut fused, &format!("layer{l}.b_c"), &format!("layer{l}.b_in"));
        copy(&mut fused, &format!("layer{l}.lambda_raw"), &format!("layer{l}.lambda_raw"));
        fused.block_mut(&format!("layer{l}.b_i")).unwrap().fill(40.0);
        fused.block_mut(&format!("layer{l}.b_f")).unwrap().fill(-40.0);
        fused.block_mut(&format!("layer{l}.b_o")).unwrap().fill(40.0);
    }
    let src = small.block("readout.W_out").unwrap().to_vec();
    fused.block_mut("readout.W_out").unwrap().copy_from_slice(&src);
    for &(x, y) in &[(0.2, -0.4), (-0.9, 0.1), (0.5, 0.5)] {
        let a = small.forward(jet_seed(x, Axis::X), jet_seed(y, Axis::Y)).unwrap()[0];
        let b = fused.forward(jet_seed(x, Axis::X), jet_seed(y, Axis::Y)).unwrap()[0];
        for (p, q) in a.to_array().iter().zip(b.to_array()) {
            assert!((p - q).abs() <= 1e-6, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn forward_is_pure() {
    let p = ModelParams::init(Backbone::new(Variant::LstmLnnPinn).with_size(2, 8), 1);
    let pts = [[0.1, 0.2], [-0.3, 0.7], [0.0, -0.99]];
    let a = p.forward_points(&pts).unwrap();
    let b = p.forward_points(&pts).unwrap();
    assert_eq!(a, b);
    let single = p.forward(jet_seed(-0.3, Axis::X), jet_seed(0.7, Axis::Y)).unwrap()[0];
    assert_eq!(a.jet(1, 0), single);
}
