//! Heat-kernel checks: the Dirichlet kernel of a ball at its center, the
//! Gaussian lower bounds, Crank–Nicolson heat evolution outside obstacles,
//! Dirichlet/Neumann domination and the Laplace–Gaussian identity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::elliptic::{HelmholtzSolver, Preconditioner, Shift, SolveOptions};
use crate::error::{domain, Error, Result};
use crate::geometry::{geodesic_deps_many, Point3, SceneSpec};
use crate::grid::{Label, Mask, ScalarField};
use crate::stencil::ObstacleBc;
use crate::wavesim::Medium;

const MAX_EIGEN_TERMS: usize = 1_000_000;
const REPRESENTATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelProbe {
    pub epsilon: f64,
    pub t: f64,
    pub value: f64,
}

/// Number of eigenmodes after which the tail of
/// Σ n² e^{−(nπ/ε)²t} is below 1e−15 of the partial sum.
pub fn eigen_terms(epsilon: f64, t: f64) -> usize {
    let a = (PI / epsilon).powi(2) * t;
    let mut sum = 0.0;
    let mut n = 1usize;
    loop {
        let term = (n * n) as f64 * (-a * (n * n) as f64).exp();
        sum += term;
        let m = (n + 1) as f64;
        let next = m * m * (-a * m * m).exp();
        let q = ((m + 1.0) / m).powi(2) * (-a * (2.0 * m + 1.0)).exp();
        if q < 1.0 && next / (1.0 - q) < 1e-15 * sum {
            return n;
        }
        if n >= MAX_EIGEN_TERMS {
            return n + 1;
        }
        n += 1;
    }
}

/// K_ε(0,0;t) from the radial Dirichlet modes sin(nπr/ε)/r.
pub fn kernel_eigenseries(epsilon: f64, t: f64, n_terms: usize) -> f64 {
    let a = (PI / epsilon).powi(2) * t;
    // Summed from the tail so small terms are not lost.
    let s: f64 = (1..=n_terms)
        .rev()
        .map(|n| {
            let n2 = (n * n) as f64;
            n2 * (-a * n2).exp()
        })
        .sum();
    PI / (2.0 * epsilon.powi(3)) * s
}

/// K_ε(0,0;t) from the method of images applied to r·u on (0, ε).
pub fn kernel_image_sum(epsilon: f64, t: f64) -> f64 {
    kernel_image_parts(epsilon, t).0
}

/// Value and sum of absolute terms (for conditioning).
fn kernel_image_parts(epsilon: f64, t: f64) -> (f64, f64) {
    let free = (4.0 * PI * t).powf(-1.5);
    let mut s = 1.0;
    let mut abs = 1.0;
    let mut k = 1.0f64;
    loop {
        let q = k * k * epsilon * epsilon / t;
        let e = (-q).exp();
        if e == 0.0 || (k > 1.0 && e * (1.0 + 2.0 * q) < 1e-18) {
            break;
        }
        let term = 2.0 * (1.0 - 2.0 * q) * e;
        s += term;
        abs += term.abs();
        k += 1.0;
    }
    (free * s, free * abs)
}

/// K_ε(0,0;t) with a cross-check between the two representations wherever
/// both are well conditioned.
pub fn ball_kernel_center(epsilon: f64, t: f64) -> Result<f64> {
    if !(epsilon > 0.0 && t > 0.0) {
        return domain("epsilon and t must be positive");
    }
    let n = eigen_terms(epsilon, t);
    let (img, img_abs) = kernel_image_parts(epsilon, t);
    if n > MAX_EIGEN_TERMS {
        return Ok(img);
    }
    let eig = kernel_eigenseries(epsilon, t, n);
    if img_abs <= 1e4 * eig && ((eig - img) / eig).abs() > REPRESENTATION_TOL {
        return Err(Error::Consistency(format!("kernel representations disagree at eps={epsilon}, t={t}: series {eig:e}, images {img:e}")));
    }
    Ok(eig)
}

/// ln K_ε(0,0;t), finite even where the value underflows.
pub fn log_ball_kernel_center(epsilon: f64, t: f64) -> Result<f64> {
    let a = (PI / epsilon).powi(2) * t;
    if a < 1.0 {
        return Ok(ball_kernel_center(epsilon, t)?.ln());
    }
    let n = eigen_terms(epsilon, t);
    let s: f64 = (1..=n)
        .rev()
        .map(|k| {
            let k2 = (k * k) as f64;
            k2 * (-a * (k2 - 1.0)).exp()
        })
        .sum();
    Ok((PI / (2.0 * epsilon.powi(3))).ln() - a + s.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundRow {
    pub epsilon: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub pass: bool,
}

/// K_ε(0,0;t) ≥ (4πt)^{−3/2} e^{−9π²t/(4ε²)} on every t; compared in logs.
pub fn lemma42_check(epsilon: f64, t_grid: &[f64]) -> Result<Vec<KernelBoundRow>> {
    t_grid
        .iter()
        .map(|&t| {
            if !(t > 0.0) {
                return domain(format!("t must be positive, got {t}"));
            }
            let log_lhs = log_ball_kernel_center(epsilon, t)?;
            let log_rhs = -1.5 * (4.0 * PI * t).ln() - 9.0 * PI * PI * t / (4.0 * epsilon * epsilon);
            Ok(KernelBoundRow {
                epsilon,
                t,
                lhs: log_lhs.exp(),
                rhs: log_rhs.exp(),
                log_lhs,
                log_rhs,
                pass: log_lhs >= log_rhs + (1.0 - 1e-12f64).ln(),
            })
        })
        .collect()
}

/// `n` log-spaced values from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatBc {
    Dirichlet,
    Neumann,
}

impl From<HeatBc> for ObstacleBc {
    fn from(b: HeatBc) -> Self {
        match b {
            HeatBc::Dirichlet => ObstacleBc::Dirichlet,
            HeatBc::Neumann => ObstacleBc::Neumann,
        }
    }
}

/// Crank–Nicolson evolution of ∂_t Z = ΔZ from Z(0) = f outside D₀, with
/// snapshots at the increasing `times`. Each interval is split into equal
/// steps no longer than `dt`. Positivity and Dirichlet/Neumann ordering
/// are guaranteed for dt ≤ h²/3, where the explicit half is monotone.
pub fn heat_evolve_snapshots(mask: &Mask, bc: HeatBc, f: &ScalarField, times: &[f64], dt: f64) -> Result<Vec<ScalarField>> {
    if f.grid != mask.grid {
        return domain("field and mask live on different grids");
    }
    if !(dt > 0.0) {
        return domain("dt must be positive");
    }
    let mut prev_t = 0.0;
    for &t in times {
        if !(t > prev_t) {
            return domain("snapshot times must be positive and increasing");
        }
        prev_t = t;
    }
    if times.first().is_some_and(|&t| dt > t) {
        return domain(format!("dt = {dt} exceeds the first snapshot time"));
    }
    let medium = Medium::new(mask.clone(), 0.0);
    let opts = SolveOptions::with_tol(1e-13);
    let mut z: Vec<f64> = (0..f.data.len()).map(|i| if mask.is_solid(i, false) { 0.0 } else { f.data[i] }).collect();
    let mut out = Vec::with_capacity(times.len());
    let mut now = 0.0;
    for &t in times {
        let n = ((t - now) / dt - 1e-9).ceil().max(1.0) as usize;
        let step = (t - now) / n as f64;
        let shift = Shift { tau: 0.0, mass: 2.0 / step, absorption: 0.0 };
        let mut solver = HelmholtzSolver::with_shift(&medium, false, bc.into(), shift, Preconditioner::Multigrid);
        for _ in 0..n {
            // (2/dt − Δ)Z⁺ = (2/dt + Δ)Z = (4/dt)Z − (2/dt − Δ)Z
            let az = solver.apply(&z);
            let rhs: Vec<f64> = z.iter().zip(&az).map(|(z, a)| 4.0 / step * z - a).collect();
            z = solver.solve(&rhs, &opts)?.0;
        }
        now = t;
        out.push(ScalarField::from_vec(&mask.grid, z.clone())?);
    }
    Ok(out)
}

pub fn heat_evolve(mask: &Mask, bc: HeatBc, f: &ScalarField, t: f64, dt: f64) -> Result<ScalarField> {
    Ok(heat_evolve_snapshots(mask, bc, f, &[t], dt)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationRow {
    pub t: f64,
    pub max_violation: f64,
    pub scale: f64,
    pub pass: bool,
}

/// Evolves f under both obstacle conditions and reports
/// max(Z_dirichlet − Z_neumann) over fluid cells at each time.
pub fn domination_check(mask: &Mask, f: &ScalarField, times: &[f64], dt: f64) -> Result<Vec<DominationRow>> {
    if f.data.iter().any(|v| *v < 0.0) {
        return domain("domination check needs nonnegative data");
    }
    let zd = heat_evolve_snapshots(mask, HeatBc::Dirichlet, f, times, dt)?;
    let zn = heat_evolve_snapshots(mask, HeatBc::Neumann, f, times, dt)?;
    Ok(times
        .iter()
        .zip(zd.iter().zip(&zn))
        .map(|(&t, (d, n))| {
            let mut viol = f64::NEG_INFINITY;
            for i in 0..d.data.len() {
                if !mask.is_solid(i, false) {
                    viol = viol.max(d.data[i] - n.data[i]);
                }
            }
            let scale = n.max_abs();
            DominationRow { t, max_violation: viol, scale, pass: viol <= 1e-10 * scale }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub s: f64,
    pub tau: f64,
    pub t_max: f64,
    pub numeric: f64,
    pub closed_form: f64,
    pub rel_err: f64,
}

/// Adaptive double-exponential quadrature with interval bisection.
pub fn adaptive_integral(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Option<f64> {
        let o = quadrature::integrate(f, a, b, tol);
        if o.error_estimate <= tol {
            return Some(o.integral);
        }
        if depth == 0 {
            return None;
        }
        let m = 0.5 * (a + b);
        Some(rec(f, a, m, 0.5 * tol, depth - 1)? + rec(f, m, b, 0.5 * tol, depth - 1)?)
    }
    rec(f, a, b, tol, 24).ok_or_else(|| Error::Solver(format!("quadrature on [{a}, {b}] did not converge")))
}

/// ∫₀^{t_max} (4πt)^{−3/2} e^{−s²/4t} e^{−τ²t} dt against e^{−τs}/(4πs).
pub fn identity_quadrature(s: f64, tau: f64, t_max: f64) -> Result<IdentityCheck> {
    if !(s > 0.0 && tau > 0.0) {
        return domain("s and tau must be positive");
    }
    if t_max < 50.0 / (tau * tau) {
        return domain(format!("t_max = {t_max} is below 50/tau^2"));
    }
    let closed_form = (-tau * s).exp() / (4.0 * PI * s);
    let g = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            (4.0 * PI * t).powf(-1.5) * (-s * s / (4.0 * t) - tau * tau * t).exp()
        }
    };
    // Panels growing geometrically from the integrand's peak region.
    let peak = (s * s / 6.0).min(t_max);
    let mut edges = vec![0.0, peak];
    while *edges.last().unwrap() < t_max {
        let next = (edges.last().unwrap() * 4.0).min(t_max);
        edges.push(next);
    }
    let tol = 1e-12 * closed_form;
    let mut numeric = 0.0;
    for w in edges.windows(2) {
        numeric += adaptive_integral(&g, w[0], w[1], tol / edges.len() as f64)?;
    }
    Ok(IdentityCheck { s, tau, t_max, numeric, closed_form, rel_err: ((numeric - closed_form) / closed_form).abs() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicBoundRow {
    pub x: Point3,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Z_dirichlet(x,t) ≥ (1 − slack)·∫_B e^{−d_ε(x,y)²/4t} K_ε(0,0;t) f(y) dy
/// at each probe (snapped to its cell) and time; d_ε from the geodesic
/// search with spacing `geo_h`.
#[allow(clippy::too_many_arguments)]
pub fn geodesic_bound_check(
    scene: &SceneSpec,
    mask: &Mask,
    f: &ScalarField,
    epsilon: f64,
    times: &[f64],
    dt: f64,
    probes: &[Point3],
    geo_h: f64,
    slack: f64,
) -> Result<Vec<GeodesicBoundRow>> {
    let g = &mask.grid;
    let b_cells: Vec<usize> = mask.cells(Label::SourceB).into_iter().filter(|&c| f.data[c] != 0.0).collect();
    let ys: Vec<Point3> = b_cells.iter().map(|&c| g.center(c)).collect();
    let z = heat_evolve_snapshots(mask, HeatBc::Dirichlet, f, times, dt)?;
    let mut rows = Vec::new();
    for x in probes {
        let cell = g.locate(x).ok_or_else(|| Error::Domain(format!("probe {x:?} outside the grid")))?;
        let xc = g.center(cell);
        let d = geodesic_deps_many(scene, epsilon, geo_h, &xc, &ys)?;
        for (ti, &t) in times.iter().enumerate() {
            let k = ball_kernel_center(epsilon, t)?;
            let rhs = g.cell_volume() * b_cells.iter().zip(&d).map(|(&c, &dy)| (-dy * dy / (4.0 * t)).exp() * f.data[c]).sum::<f64>() * k;
            let lhs = z[ti].data[cell];
            rows.push(GeodesicBoundRow { x: xc, t, lhs, rhs, pass: lhs >= (1.0 - slack) * rhs });
        }
    }
    Ok(rows)
}
