use peb_pinn::physics::{residual_potential, sample_boundary, sample_interior, NonDimScheme, PhysicalConstants, Where};
use peb_pinn::reference::{radial_fd_solve, AnalyticSolution};
use peb_pinn::Error;

fn exact() -> AnalyticSolution {
    AnalyticSolution::new(PhysicalConstants::default()).unwrap()
}

#[test]
fn edge_and_centre_values() {
    let a = exact();
    assert!((a.u(1.0).unwrap() - 0.976_958_5).abs() < 1e-7);
    assert!((a.kelvin(1.0).unwrap() - 803.0).abs() < 1e-9);
    assert_eq!(a.u(0.0).unwrap(), 1.0);
    assert!((a.kelvin(0.0).unwrap() - 803.070_754_7).abs() < 1e-6);
    assert!(matches!(a.u(1.0 + 1e-9), Err(Error::Domain(_))));
    assert!(matches!(a.u(-0.1), Err(Error::Domain(_))));
}

#[test]
fn radially_symmetric_and_monotone() {
    let a = exact();
    for r in [0.1, 0.5, 0.93] {
        assert_eq!(a.jet([r, 0.0]).v, a.jet([0.0, r]).v);
    }
    let mut prev = f64::INFINITY;
    for i in 0..=1000 {
        let u = a.u(i as f64 / 1000.0).unwrap();
        assert!(u <= prev);
        prev = u;
    }
}

#[test]
fn analytic_field_has_null_residuals() {
    let a = exact();
    let (mut div, mut port) = (0.0f64, 0.0f64);
    for p in sample_interior(5000, 3) {
        let b = residual_potential(a.jet(p), p, Where::Interior, &a.scheme).unwrap();
        div = div.max(b.r_div.abs());
    }
    for p in sample_boundary(5000, 4) {
        let b = residual_potential(a.jet(p), p, Where::Boundary, &a.scheme).unwrap();
        port = port.max(b.r_port.unwrap().abs());
    }
    assert!(div <= 1e-10 && port <= 1e-10, "{div:e} {port:e}");
}

#[test]
fn finite_volume_converges_at_second_order() {
    let a = exact();
    let e1 = radial_fd_solve(1001, &a.scheme).unwrap().max_error(&a).unwrap();
    let e2 = radial_fd_solve(2001, &a.scheme).unwrap().max_error(&a).unwrap();
    let e4 = radial_fd_solve(4001, &a.scheme).unwrap().max_error(&a).unwrap();
    assert!(e1 <= 1e-6, "{e1:e}");
    assert!(e4 <= 1e-7, "{e4:e}");
    let ratio = e1 / e2;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    let ratio = radial_fd_solve(101, &a.scheme).unwrap().max_error(&a).unwrap()
        / radial_fd_solve(201, &a.scheme).unwrap().max_error(&a).unwrap();
    assert!((3.0..=5.0).contains(&ratio), "coarse ratio {ratio}");
}

#[test]
fn dirichlet_limit() {
    let c = PhysicalConstants {
        h: 50.0e6,
        ..Default::default()
    };
    let s = NonDimScheme::new(&c).unwrap();
    let sol = radial_fd_solve(1001, &s).unwrap();
    assert!(sol.u_nodes.last().unwrap().abs() < 1e-4);
}

#[test]
fn grid_too_small() {
    let a = exact();
    assert!(matches!(radial_fd_solve(15, &a.scheme), Err(Error::Domain(_))));
}
