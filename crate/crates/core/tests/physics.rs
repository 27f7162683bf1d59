use std::f64::consts::PI;

use peb_pinn::autodiff::{jet_seed, Axis, Jet2};
use peb_pinn::model::{Backbone, HeadMode, ModelParams, Variant};
use peb_pinn::physics::*;
use peb_pinn::reference::AnalyticSolution;
use peb_pinn::Error;

fn scheme() -> NonDimScheme {
    NonDimScheme::new(&PhysicalConstants::default()).unwrap()
}

#[test]
fn interior_samples_are_uniform_on_the_disk() {
    let pts = sample_interior(1000, 5);
    assert!(pts.iter().all(|p| p[0] * p[0] + p[1] * p[1] < 1.0));
    assert_eq!(pts, sample_interior(1000, 5));
    assert_ne!(pts, sample_interior(1000, 6));

    let n = 100_000;
    let r2: Vec<f64> = sample_interior(n, 2).iter().map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let mean = r2.iter().sum::<f64>() / n as f64;
    // r² is uniform on [0,1], variance 1/12
    let sigma = (1.0 / 12.0 / n as f64).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn boundary_samples_sit_on_the_circle() {
    let pts = sample_boundary(512, 3);
    for p in &pts {
        assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() <= UNIT_TOL);
    }
    assert_eq!(pts, sample_boundary(512, 3));
}

#[test]
fn zero_network_residuals() {
    let sc = scheme();
    let z = Jet2::constant(0.0);
    let b = residual_potential(z, [0.2, 0.1], Where::Interior, &sc).unwrap();
    assert!((b.r_div + 9.216_590e-2).abs() < 1e-8);
    assert_eq!(b.r_port, None);
    let b = residual_potential(z, [0.6, 0.8], Where::Boundary, &sc).unwrap();
    assert_eq!(b.r_port, Some(0.0));
    assert!(matches!(
        residual_potential(z, [0.5, 0.5], Where::Boundary, &sc),
        Err(Error::Domain(_))
    ));
    let b = residual_mixed(&[z, z, z], [0.2, 0.1], Where::Interior, &sc).unwrap();
    assert_eq!(b.r_twist, [0.0, 0.0]);
    assert_eq!(b.r_clo, 0.0);
    assert_eq!(b.r_div.abs(), sc.q_hat);
    assert!(matches!(residual_mixed(&[z], [0.2, 0.1], Where::Interior, &sc), Err(Error::Mode(_))));
}

#[test]
fn rotational_flux_proxy() {
    let sc = scheme();
    let c = 0.7;
    let (x0, y0) = (0.3, -0.4);
    let x = jet_seed(x0, Axis::X);
    let y = jet_seed(y0, Axis::Y);
    let heads = [Jet2::constant(0.0), y.scale(c), x.scale(-c)];
    let b = residual_mixed(&heads, [x0, y0], Where::Interior, &sc).unwrap();
    assert!((b.r_clo + 2.0 * c).abs() < 1e-15);
    assert!((b.r_div.abs() - sc.q_hat).abs() < 1e-15);
    assert_eq!(b.r_twist, [y0 * c, -x0 * c]);
}

#[test]
fn mixed_mode_reduces_to_potential() {
    let sc = scheme();
    let exact = AnalyticSolution::new(PhysicalConstants::default()).unwrap();
    let pts = sample_interior(200, 9).into_iter().map(|p| (p, Where::Interior));
    let bnd = sample_boundary(200, 9).into_iter().map(|p| (p, Where::Boundary));
    for (p, place) in pts.chain(bnd) {
        // an arbitrary smooth field, not a solution
        let x = jet_seed(p[0], Axis::X);
        let y = jet_seed(p[1], Axis::Y);
        let u = x * x * y + exact.jet(p) + y.scale(0.3);
        let wx = Jet2 {
            v: -u.gx,
            gx: -u.hxx,
            gy: -u.hxy,
            ..Jet2::ZERO
        };
        let wy = Jet2 {
            v: -u.gy,
            gx: -u.hxy,
            gy: -u.hyy,
            ..Jet2::ZERO
        };
        let a = residual_potential(u, p, place, &sc).unwrap();
        let b = residual_mixed(&[u, wx, wy], p, place, &sc).unwrap();
        assert!(b.r_twist.iter().all(|t| t.abs() <= 1e-12));
        assert!(b.r_clo.abs() <= 1e-12);
        assert!((a.r_div - b.r_div).abs() <= 1e-12);
        match (a.r_port, b.r_port) {
            (Some(pa), Some(pb)) => assert!((pa - pb).abs() <= 1e-12),
            (None, None) => {}
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn loss_arithmetic() {
    let w = LossWeights::nondimensional(1.0);
    let sc = scheme();
    let b = ResidualBundle {
        r_div: -sc.q_hat,
        ..Default::default()
    };
    let v = loss_pde(&[b], &w).unwrap();
    assert!((v - PI * sc.q_hat * sc.q_hat).abs() < 1e-15);
    assert!((v - 2.668_643e-2).abs() < 1e-8);
    let w2 = LossWeights { w2: 2.0, ..w };
    assert!((loss_pde(&[b], &w2).unwrap() - 2.0 * v).abs() < 1e-16);
    assert_eq!(loss_pde(&[ResidualBundle::default(); 4], &w).unwrap(), 0.0);
    assert!(matches!(loss_pde(&[], &w), Err(Error::Domain(_))));

    let port = ResidualBundle {
        r_port: Some(1.0),
        ..Default::default()
    };
    assert!((loss_bc(&[port], &w).unwrap() - 2.0 * PI).abs() < 1e-15);
    let zero_port = ResidualBundle {
        r_port: Some(0.0),
        ..Default::default()
    };
    assert_eq!(loss_bc(&[zero_port], &w).unwrap(), 0.0);
    assert!(loss_bc(&[b], &w).is_err());
    assert!(loss_bc(&[], &w).is_err());
    assert_eq!(loss_total(0.0, 0.0), 0.0);
    assert_eq!(loss_total(2.5e-3, 0.0), 2.5e-3);
    assert!((loss_total(2.5e-3, 1.5e-3) - 4.0e-3).abs() < 1e-18);
}

#[test]
fn exact_solution_has_negligible_port_loss() {
    let sc = scheme();
    let exact = AnalyticSolution::new(PhysicalConstants::default()).unwrap();
    let w = LossWeights::default();
    let bundles: Vec<_> = sample_boundary(512, 4)
        .into_iter()
        .map(|p| residual_potential(exact.jet(p), p, Where::Boundary, &sc).unwrap())
        .collect();
    assert!(loss_bc(&bundles, &w).unwrap() <= 1e-18);
}

#[test]
fn constant_residual_quadrature() {
    let w = LossWeights::nondimensional(1.0);
    let c = 0.37;
    let b = ResidualBundle {
        r_div: c,
        ..Default::default()
    };
    let v = loss_pde(&vec![b; 100_000], &w).unwrap();
    assert!((v - PI * c * c).abs() <= 1e-10 * v);
}

fn network(head: HeadMode) -> ModelParams {
    ModelParams::init(Backbone::new(Variant::LnnPinn).with_size(2, 12).with_head(head), 21)
}

fn bundles(p: &ModelParams, set: &CollocationSet, sc: &NonDimScheme) -> (Vec<ResidualBundle>, Vec<ResidualBundle>) {
    let eval = |pts: &[[f64; 2]], place| {
        let out = p.forward_points(pts).unwrap();
        pts.iter()
            .enumerate()
            .map(|(r, &x)| {
                let heads: Vec<Jet2> = (0..out.cols).map(|c| out.jet(r, c)).collect();
                match p.head() {
                    HeadMode::Potential => residual_potential(heads[0], x, place, sc).unwrap(),
                    HeadMode::Mixed => residual_mixed(&heads, x, place, sc).unwrap(),
                }
            })
            .collect()
    };
    (eval(&set.interior, Where::Interior), eval(&set.boundary, Where::Boundary))
}

#[test]
fn recorded_objective_matches_scalar_losses() {
    let sc = scheme();
    let w = LossWeights::default();
    let set = CollocationSet::new(300, 70, 8, ResamplePolicy::Fixed);
    for head in [HeadMode::Potential, HeadMode::Mixed] {
        let p = network(head);
        let (bi, bb) = bundles(&p, &set, &sc);
        let pde = loss_pde(&bi, &w).unwrap();
        let bc = loss_bc(&bb, &w).unwrap();
        for chunk in [64, 1024] {
            let (parts, grad) = objective(&p, &set, &sc, &w, chunk, false).unwrap();
            assert!(grad.is_none());
            assert!((parts.pde - pde).abs() <= 1e-12 * pde, "{head:?} {} {pde}", parts.pde);
            assert!((parts.bc - bc).abs() <= 1e-12 * bc);
            assert_eq!(parts.total, parts.pde + parts.bc);
        }
    }
}

#[test]
fn objective_is_stable_across_seeds() {
    let sc = scheme();
    let w = LossWeights::default();
    let p = network(HeadMode::Potential);
    let n = 4096;
    let mut estimates = Vec::new();
    for seed in [1, 2] {
        let set = CollocationSet::new(n, 16, seed, ResamplePolicy::Fixed);
        let (bi, _) = bundles(&p, &set, &sc);
        let terms: Vec<f64> = bi.iter().map(|b| PI * b.r_div * b.r_div).collect();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (parts, _) = objective(&p, &set, &sc, &w, 1024, false).unwrap();
        assert!((parts.pde - mean).abs() <= 1e-12 * mean);
        estimates.push((mean, var / n as f64));
    }
    let se = (estimates[0].1 + estimates[1].1).sqrt();
    assert!((estimates[0].0 - estimates[1].0).abs() <= 5.0 * se);
}

#[test]
fn batches_put_interior_first() {
    let set = CollocationSet::new(2500, 600, 1, ResamplePolicy::Fixed);
    let b = batches(&set, 1024);
    let parts: Vec<_> = b.iter().map(|b| (b.part, b.points.len())).collect();
    assert_eq!(
        parts,
        vec![(Part::Pde, 1024), (Part::Pde, 1024), (Part::Pde, 452), (Part::Bc, 600)]
    );
    assert!((b[0].weight - PI / 2500.0).abs() < 1e-18);
    assert!((b[3].weight - 2.0 * PI / 600.0).abs() < 1e-18);
}

#[test]
fn resampling_policy() {
    let mut fixed = CollocationSet::new(10, 4, 3, ResamplePolicy::Fixed);
    let before = fixed.interior.clone();
    fixed.refresh(5);
    assert_eq!(fixed.interior, before);
    let mut moving = CollocationSet::new(10, 4, 3, ResamplePolicy::EveryIteration);
    let first = moving.interior.clone();
    moving.refresh(1);
    assert_ne!(moving.interior, first);
    let again = moving.interior.clone();
    let mut twin = CollocationSet::new(10, 4, 3, ResamplePolicy::EveryIteration);
    twin.refresh(1);
    assert_eq!(twin.interior, again);
}
