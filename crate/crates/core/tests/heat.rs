use std::f64::consts::PI;

use enclosure_core::geometry::{BallSpec, ConvexBodySpec, Point3, SceneSpec};
use enclosure_core::grid::{integrate, voxelize, Grid3, Label, Mask};
use enclosure_core::heatkernel::{adaptive_integral, domination_check, geodesic_bound_check, heat_evolve, heat_evolve_snapshots, HeatBc};
use enclosure_core::wavesim::make_source;

fn cube(n: usize, half: f64) -> Grid3 {
    let h = 2.0 * half / n as f64;
    Grid3::new(Point3::repeat(-half), h, [n; 3], 0).unwrap()
}

fn obstacle_scene(source: Point3, eta: f64) -> SceneSpec {
    SceneSpec {
        d0_bodies: vec![ConvexBodySpec::ball(Point3::zeros(), 1.0).unwrap()],
        d_bodies: vec![],
        source: BallSpec::new(source, eta).unwrap(),
        g_amplitude: 1.0,
    }
}

fn setup(scene: &SceneSpec, n: usize, half: f64) -> (Mask, enclosure_core::grid::ScalarField) {
    let g = cube(n, half);
    let m = voxelize(scene, &g).unwrap();
    let f = make_source(scene, &m).unwrap().field;
    (m, f)
}

#[test]
fn free_space_matches_gaussian_convolution() {
    let eta = 0.5;
    let scene = SceneSpec { d0_bodies: vec![], d_bodies: vec![], source: BallSpec::new(Point3::zeros(), eta).unwrap(), g_amplitude: 1.0 };
    // Odd cell count so that p is a cell center.
    let h = 0.0625;
    let g = Grid3::new(Point3::repeat(-2.5 - 0.5 * h), h, [81; 3], 0).unwrap();
    let m = voxelize(&scene, &g).unwrap();
    let f = make_source(&scene, &m).unwrap().field;
    let t = 0.1;
    let z = heat_evolve(&m, HeatBc::Neumann, &f, t, h * h / 3.0).unwrap();
    for rho in [0.0, 0.5, 1.0] {
        let exact = gaussian_convolution(eta, rho, t);
        let got = z.data[g.locate(&Point3::new(rho, 0.0, 0.0)).unwrap()];
        let rel = (got - exact).abs() / exact;
        assert!(rel <= 0.02, "rho {rho}: {got} vs {exact} ({rel:.3e})");
    }
}

/// (4πt)^{−3/2}∫ e^{−|x−y|²/4t} (η−|y|)² dy at |x| = ρ, reduced to a radial
/// integral over shells.
fn gaussian_convolution(eta: f64, rho: f64, t: f64) -> f64 {
    let shell = |r: f64| -> f64 {
        let f = (eta - r).powi(2);
        let s = if rho < 1e-12 {
            4.0 * PI * r * r * (-r * r / (4.0 * t)).exp()
        } else {
            4.0 * PI * r * t / rho * ((-(rho - r).powi(2) / (4.0 * t)).exp() - (-(rho + r).powi(2) / (4.0 * t)).exp())
        };
        f * s
    };
    (4.0 * PI * t).powf(-1.5) * adaptive_integral(&shell, 0.0, eta, 1e-14).unwrap()
}

#[test]
fn positivity_and_mass() {
    let scene = obstacle_scene(Point3::new(-2.0, 0.0, 0.0), 0.5);
    let (m, f) = setup(&scene, 48, 4.0);
    let dt = m.grid.h * m.grid.h / 3.0;
    let times = [0.05, 0.1, 0.2];
    let mass0 = integrate(&f, &m, Label::SourceB);
    let all = |z: &enclosure_core::grid::ScalarField| z.data.iter().sum::<f64>() * m.grid.cell_volume();
    let zn = heat_evolve_snapshots(&m, HeatBc::Neumann, &f, &times, dt).unwrap();
    let zd = heat_evolve_snapshots(&m, HeatBc::Dirichlet, &f, &times, dt).unwrap();
    let mut last = mass0;
    for (a, b) in zn.iter().zip(&zd) {
        assert!(a.data.iter().all(|v| *v >= -1e-12));
        assert!(b.data.iter().all(|v| *v >= -1e-12));
        assert!((all(a) / mass0 - 1.0).abs() < 5e-3, "neumann mass {}", all(a) / mass0);
        assert!(all(b) <= last * (1.0 + 1e-12));
        last = all(b);
    }
}

#[test]
fn domination_on_unit_ball_obstacle() {
    let scene = obstacle_scene(Point3::new(-2.0, 0.0, 0.0), 0.5);
    let (m, f) = setup(&scene, 32, 3.0);
    let rows = domination_check(&m, &f, &[0.1, 0.5, 1.0], m.grid.h * m.grid.h / 3.0).unwrap();
    for r in &rows {
        assert!(r.pass, "{r:?}");
    }
    let empty = SceneSpec { d0_bodies: vec![], ..scene.clone() };
    let (m, f) = setup(&empty, 32, 3.0);
    let rows = domination_check(&m, &f, &[0.5], m.grid.h * m.grid.h / 3.0).unwrap();
    assert_eq!(rows[0].max_violation, 0.0);
    let mut neg = f.clone();
    let c = m.cells(Label::SourceB)[0];
    neg.data[c] = -1.0;
    assert!(domination_check(&m, &neg, &[0.5], 0.01).is_err());
}

#[test]
fn geodesic_lower_bound_holds() {
    let scene = obstacle_scene(Point3::new(-2.2, 0.0, 0.0), 0.6);
    let (m, f) = setup(&scene, 48, 4.0);
    let probes = [Point3::new(2.0, 0.0, 0.0), Point3::new(0.0, 1.6, 0.0), Point3::new(-1.5, 1.0, 0.0)];
    let rows = geodesic_bound_check(&scene, &m, &f, 0.3, &[0.25, 0.5, 1.0], m.grid.h * m.grid.h / 3.0, &probes, 0.05, 0.1).unwrap();
    for r in &rows {
        assert!(r.pass, "{r:?}");
        assert!(r.rhs > 0.0);
    }
}
