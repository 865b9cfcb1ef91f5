use std::f64::consts::PI;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use proptest::prelude::*;

use enclosure_core::elliptic::{HelmholtzSolver, Preconditioner, Shift};
use enclosure_core::geometry::{
    detour_arc_ball, detour_arc_convex, detour_constant, dist_sets, BallSpec, ConvexBodySpec, DetourKind, Point3, SceneSpec, Vec3,
};
use enclosure_core::grid::{voxelize, Grid3, Label};
use enclosure_core::heatkernel::{
    ball_kernel_center, eigen_terms, heat_evolve, identity_quadrature, kernel_eigenseries, kernel_image_sum, lemma42_check,
    log_ball_kernel_center, HeatBc,
};
use enclosure_core::indicator::{decide, indicator_values, range_lower_bound, trapezoid_laplace, IndicatorSample, IndicatorSeries};
use enclosure_core::wavesim::{make_source, Medium};

fn point(r: f64) -> impl Strategy<Value = Point3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn direction() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, 0.0..2.0 * PI).prop_map(|(z, phi)| {
        let s = (1.0 - z * z).sqrt();
        Vec3::new(s * phi.cos(), s * phi.sin(), z)
    })
}

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero quaternion", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
        .prop_map(|(a, b, c, d)| UnitQuaternion::from_quaternion(Quaternion::new(a, b, c, d)).to_rotation_matrix().into_inner())
}

fn ellipsoid() -> impl Strategy<Value = ConvexBodySpec> {
    (point(1.0), 0.3..2.0f64, 0.3..2.0f64, 0.3..2.0f64, rotation())
        .prop_map(|(c, a, b, d, r)| ConvexBodySpec::ellipsoid(c, [a, b, d], r).unwrap())
}

/// A point at signed distance `d` above the body along the normal at a
/// surface point, and that normal.
fn above(body: &ConvexBodySpec, u: &Vec3, d: f64) -> (Point3, Vec3) {
    let a = body.semi_axes();
    let q = Vec3::new(a[0] * u.x, a[1] * u.y, a[2] * u.z);
    let n = Vec3::new(q.x / (a[0] * a[0]), q.y / (a[1] * a[1]), q.z / (a[2] * a[2]));
    let r = body.orientation();
    let nu = (r * n).normalize();
    (body.center() + r * q + d * nu, nu)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_decreases_in_time(eps in 0.3..3.0f64, t in 1e-3..5.0f64, f in 1.01..3.0f64) {
        let a = log_ball_kernel_center(eps, t).unwrap();
        let b = log_ball_kernel_center(eps, t * f).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn kernel_grows_with_the_ball(eps in 0.3..3.0f64, t in 1e-3..5.0f64, f in 1.01..3.0f64) {
        let small = log_ball_kernel_center(eps, t).unwrap();
        let big = log_ball_kernel_center(eps * f, t).unwrap();
        prop_assert!(big >= small - 1e-12);
    }

    #[test]
    fn kernel_representations_agree(eps in 0.3..3.0f64, r in 1e-3..0.5f64) {
        let t = r * eps * eps;
        let series = kernel_eigenseries(eps, t, eigen_terms(eps, t));
        let images = kernel_image_sum(eps, t);
        prop_assert!(((series - images) / series).abs() <= 1e-10, "{series} vs {images}");
        prop_assert!(ball_kernel_center(eps, t).is_ok());
    }

    #[test]
    fn gaussian_lower_bound_holds(eps in 0.2..4.0f64, t in 1e-4..20.0f64) {
        let row = lemma42_check(eps, &[t]).unwrap()[0];
        prop_assert!(row.pass, "{row:?}");
    }

    #[test]
    fn identity_holds_on_random_pairs(s in 0.3..3.0f64, tau in 0.5..5.0f64) {
        let r = identity_quadrature(s, tau, 64.0 / (tau * tau)).unwrap();
        prop_assert!(r.rel_err <= 1e-6, "{r:?}");
    }

    #[test]
    fn ball_arc_clears_and_is_short(
        c in point(3.0),
        r in 0.1..2.0f64,
        ux in direction(),
        uy in direction(),
        ox in -6.0..0.5f64,
        oy in -6.0..0.5f64,
    ) {
        let u = BallSpec::new(c, r).unwrap();
        let x = c + r * (1.0 + 10f64.powf(ox)) * ux;
        let y = c + r * (1.0 + 10f64.powf(oy)) * uy;
        let arc = detour_arc_ball(&u, &x, &y).unwrap();
        let bound = detour_constant(DetourKind::Ball).unwrap();
        prop_assert!(arc.exact_length <= bound * (x - y).norm() * (1.0 + 1e-12) + 1e-12);
        prop_assert!(arc.sample(64).iter().all(|z| u.signed_distance(z) >= -1e-9));
        prop_assert!((arc.start() - x).norm() < 1e-9 && (arc.end() - y).norm() < 1e-9);
    }

    #[test]
    fn convex_arc_clears_and_is_short(
        body in ellipsoid(),
        eps in 0.02..0.5f64,
        ux in direction(),
        uy in direction(),
        ox in -6.0..0.5f64,
        oy in -6.0..0.5f64,
        alpha in prop::sample::select(vec![0.0, -0.25, -0.5]),
    ) {
        let (x, nx) = above(&body, &ux, eps * (1.0 + 10f64.powf(ox)));
        let (y, ny) = above(&body, &uy, eps * (1.0 + 10f64.powf(oy)));
        prop_assume!(nx.dot(&ny) >= alpha);
        let arc = detour_arc_convex(&body, eps, alpha, &x, &y).unwrap();
        let bound = detour_constant(DetourKind::Convex { alpha }).unwrap();
        prop_assert!(arc.exact_length <= bound * (x - y).norm() + 1e-9);
        prop_assert!(arc.sample(64).iter().all(|z| body.signed_distance(z) >= eps - 1e-9));
    }

    #[test]
    fn projection_matches_signed_distance(body in ellipsoid(), u in direction(), d in 1e-3..3.0f64) {
        let (x, nu) = above(&body, &u, d);
        let (q, n) = body.project(&x).unwrap();
        prop_assert!(((x - q).norm() - d).abs() < 1e-8);
        prop_assert!((body.signed_distance(&x) - d).abs() < 1e-8);
        prop_assert!((n - nu).norm() < 1e-6);
    }

    #[test]
    fn ball_gap_is_symmetric_and_exact(a in point(3.0), b in point(3.0), ra in 0.1..1.0f64, rb in 0.1..1.0f64) {
        let ba = ConvexBodySpec::ball(a, ra).unwrap();
        let bb = ConvexBodySpec::ball(b, rb).unwrap();
        let d = dist_sets(&[ba.clone()], &[bb.clone()]);
        prop_assert!((d - dist_sets(&[bb], &[ba])).abs() < 1e-12);
        prop_assert!((d - ((a - b).norm() - ra - rb).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_transform_is_linear(
        u in prop::collection::vec(-1.0..1.0f64, 2..200),
        c in -3.0..3.0f64,
        dt in 1e-3..0.1f64,
        tau in 0.5..4.0f64,
    ) {
        let scaled: Vec<f64> = u.iter().map(|v| c * v + 1.0).collect();
        let ones = vec![1.0; u.len()];
        let lhs = trapezoid_laplace(&scaled, dt, tau);
        let rhs = c * trapezoid_laplace(&u, dt, tau) + trapezoid_laplace(&ones, dt, tau);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let t = dt * (u.len() - 1) as f64;
        let exact = (1.0 - (-tau * t).exp()) / tau;
        prop_assert!((trapezoid_laplace(&ones, dt, tau) - exact).abs() <= dt * dt / 12.0 * tau * tau * t + 1e-15);
    }

    #[test]
    fn identical_records_give_zero_iprime(w in prop::collection::vec(-1.0..1.0f64, 1..50), seed in 0.0..1.0f64) {
        let f: Vec<f64> = (0..w.len()).map(|i| (seed + i as f64 * 0.37).fract()).collect();
        let v = indicator_values(&w, Some(&w), Some(&w), &f, 1e-3).unwrap();
        prop_assert_eq!(v.i, Some(0.0));
        prop_assert_eq!(v.i_prime, Some(0.0));
    }

    #[test]
    fn synthetic_series_decide_by_growth(a in 0.3..3.0f64, t_final in 1.0..12.0f64) {
        prop_assume!((t_final - 2.0 * a).abs() > 0.05);
        let samples = (0..9)
            .map(|k| {
                let tau = 1.0 + 0.25 * k as f64;
                let ip = (-2.0 * a * tau).exp();
                IndicatorSample {
                    tau,
                    i: ip,
                    i_prime: ip,
                    j: 0.0,
                    e: 0.0,
                    exp_tt_i: (tau * t_final).exp() * ip,
                    exp_tt_iprime: (tau * t_final).exp() * ip,
                    reference: 1.0,
                    i_elliptic: 0.0,
                }
            })
            .collect();
        let series = IndicatorSeries::new(t_final, samples, String::new()).unwrap();
        let c = detour_constant(DetourKind::Ball).unwrap();
        let v = decide(&series, 0.0, c, None).unwrap();
        prop_assert_eq!(v.present, t_final > 2.0 * a);
        prop_assert!((v.half_log_slope + a).abs() < 1e-9);
        if v.present {
            prop_assert!((range_lower_bound(&series, c).unwrap() - a / c).abs() < 1e-9);
        } else {
            prop_assert!(range_lower_bound(&series, c).is_err());
        }
    }
}

fn small_medium(with_d: bool) -> Medium {
    let scene = SceneSpec {
        d0_bodies: vec![ConvexBodySpec::ball(Point3::new(0.2, 0.0, 0.0), 0.45).unwrap()],
        d_bodies: if with_d { vec![ConvexBodySpec::ball(Point3::new(0.3, 0.75, 0.0), 0.2).unwrap()] } else { vec![] },
        source: BallSpec::new(Point3::new(-0.6, 0.0, 0.0), 0.25).unwrap(),
        g_amplitude: 1.0,
    };
    let g = Grid3::new(Point3::repeat(-2.0), 0.125, [32; 3], 2).unwrap();
    let m = voxelize(&scene, &g).unwrap();
    Medium::new(m, 4.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn helmholtz_operator_is_symmetric_positive(
        seed in prop::collection::vec(-1.0..1.0f64, 40..=40),
        tau in 0.5..3.0f64,
        include_d in any::<bool>(),
        leapfrog in any::<bool>(),
    ) {
        let medium = small_medium(true);
        let shift = if leapfrog { Shift::leapfrog(tau, 0.05) } else { Shift::continuous(tau) };
        let a = HelmholtzSolver::new(&medium, include_d, shift, Preconditioner::Jacobi).unwrap();
        let n = medium.grid().len();
        let x: Vec<f64> = (0..n).map(|i| seed[i % 40] * ((i * 7919) % 13) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| seed[(i * 3) % 40] - seed[(i + 5) % 40]).collect();
        let active = |v: &[f64]| -> Vec<f64> {
            v.iter().enumerate().map(|(i, &s)| if medium.mask.is_solid(i, include_d) { 0.0 } else { s }).collect()
        };
        let (x, y) = (active(&x), active(&y));
        let ax = a.apply(&x);
        let ay = a.apply(&y);
        let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        let (xay, yax) = (dot(&x, &ay), dot(&y, &ax));
        prop_assert!((xay - yax).abs() <= 1e-10 * (xay.abs() + yax.abs() + 1.0));
        prop_assert!(dot(&x, &ax) > 0.0 || x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn heat_evolution_keeps_nonnegative_data_nonnegative(
        t in 0.01..0.2f64,
        neumann in any::<bool>(),
        scale in 0.1..10.0f64,
    ) {
        let medium = small_medium(false);
        let scene_f = make_source(
            &SceneSpec {
                d0_bodies: vec![ConvexBodySpec::ball(Point3::new(0.2, 0.0, 0.0), 0.45).unwrap()],
                d_bodies: vec![],
                source: BallSpec::new(Point3::new(-0.6, 0.0, 0.0), 0.25).unwrap(),
                g_amplitude: scale,
            },
            &medium.mask,
        )
        .unwrap();
        let h = medium.grid().h;
        let bc = if neumann { HeatBc::Neumann } else { HeatBc::Dirichlet };
        let z = heat_evolve(&medium.mask, bc, &scene_f.field, t, h * h / 3.0).unwrap();
        prop_assert!(z.data.iter().all(|v| *v >= -1e-12));
        let solid = medium.mask.cells(Label::D0Solid);
        prop_assert!(solid.iter().all(|&c| z.data[c] == 0.0));
    }
}
