//! Modified Helmholtz solves (τ² − Δ)v = f outside the obstacles, the
//! energies J and E, and the pieces linking the elliptic fields to the
//! time-domain records.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::grid::{gradient, Label, Mask, ScalarField};
use crate::multigrid::Multigrid;
use crate::stencil::{dot, ObstacleBc, Stencil};
use crate::wavesim::{Medium, WaveRecord};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Reaction coefficients of the operator (mass + absorption·σ − Δ).
///
/// The continuous model gives mass τ² and absorption τ. The leapfrog model
/// uses the coefficients produced by the trapezoid Laplace transform of the
/// discrete scheme, so that transformed records satisfy the elliptic
/// equation exactly up to a terminal term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub tau: f64,
    pub mass: f64,
    pub absorption: f64,
}

impl Shift {
    pub fn continuous(tau: f64) -> Self {
        Self { tau, mass: tau * tau, absorption: tau }
    }

    pub fn leapfrog(tau: f64, dt: f64) -> Self {
        let s = (0.5 * tau * dt).sinh();
        Self { tau, mass: 4.0 * s * s / (dt * dt), absorption: (tau * dt).sinh() / dt }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    Jacobi,
    Multigrid,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    /// Defaults to 10 × the largest grid dimension.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: None, preconditioner: Preconditioner::Multigrid }
    }
}

impl SolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual ‖b − Ax‖/‖b‖.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct LaplaceField {
    pub tau: f64,
    pub values: ScalarField,
    pub residual: f64,
}

/// Matrix-free operator with a reusable preconditioner.
pub struct HelmholtzSolver {
    st: Stencil,
    diag: Vec<f64>,
    off: Vec<f64>,
    mg: Option<Multigrid>,
    shift: Shift,
}

impl HelmholtzSolver {
    /// Operator (mass + absorption·σ − Δ_h) with the given obstacle
    /// condition; no parameter checks.
    pub fn with_shift(medium: &Medium, include_d: bool, bc: ObstacleBc, shift: Shift, pre: Preconditioner) -> Self {
        let st = Stencil::new(&medium.mask, include_d, bc);
        let reaction: Vec<f64> = medium.sigma.iter().map(|s| shift.mass + shift.absorption * s).collect();
        let rp = st.pad(&reaction);
        let ih2 = 1.0 / (st.h * st.h);
        let diag = (0..st.len).map(|p| st.active[p] * (rp[p] + st.arms[p] * ih2)).collect();
        let off = st.active.iter().map(|a| a * ih2).collect();
        let mg = match pre {
            Preconditioner::Jacobi => None,
            Preconditioner::Multigrid => {
                let g = medium.grid();
                let act: Vec<bool> = (0..g.len()).map(|i| !medium.mask.is_solid(i, include_d)).collect();
                Some(Multigrid::new(g.dims, g.h, &act, &reaction, bc))
            }
        };
        Self { st, diag, off, mg, shift }
    }

    /// Sound-hard operator for the Laplace parameter τ; checks τ ≥ 0.5 and
    /// τh ≤ 0.5.
    pub fn new(medium: &Medium, include_d: bool, shift: Shift, pre: Preconditioner) -> Result<Self> {
        check_tau(shift.tau, medium.grid().h)?;
        Ok(Self::with_shift(medium, include_d, ObstacleBc::Neumann, shift, pre))
    }

    pub fn shift(&self) -> Shift {
        self.shift
    }

    fn apply_padded(&self, x: &[f64], y: &mut [f64]) {
        self.st.apply_split(&self.diag, &self.off, x, y);
    }

    /// A·x for an unpadded field (values on solid cells are ignored).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut xp = self.st.pad(x);
        for (v, a) in xp.iter_mut().zip(&self.st.active) {
            *v *= a;
        }
        let mut y = vec![0.0; self.st.len];
        self.apply_padded(&xp, &mut y);
        self.st.unpad(&y)
    }

    /// Preconditioned conjugate gradients from a zero initial guess.
    pub fn solve(&mut self, rhs: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveStats)> {
        if !(opts.tol > 0.0) {
            return domain("solver tolerance must be positive");
        }
        let n = self.st.n;
        let cap = opts.max_iter.unwrap_or(10 * n.iter().max().unwrap());
        let mut b = self.st.pad(rhs);
        for (v, a) in b.iter_mut().zip(&self.st.active) {
            *v *= a;
        }
        let len = self.st.len;
        let mut x = vec![0.0; len];
        let bnorm = dot(&b, &b).sqrt();
        if bnorm == 0.0 {
            return Ok((self.st.unpad(&x), SolveStats::default()));
        }
        if !bnorm.is_finite() {
            return Err(Error::Solver("right-hand side is not finite".into()));
        }
        let mut r = b.clone();
        let mut z = vec![0.0; len];
        let mut q = vec![0.0; len];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut it = 0;
        loop {
            if it >= cap {
                let rel = dot(&r, &r).sqrt() / bnorm;
                return Err(Error::Solver(format!("conjugate gradients hit the iteration cap {cap} at relative residual {rel:.3e}")));
            }
            it += 1;
            self.apply_padded(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Solver("operator lost positive definiteness".into()));
            }
            let alpha = rz / pq;
            for i in 0..len {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if dot(&r, &r).sqrt() <= opts.tol * bnorm {
                break;
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..len {
                p[i] = z[i] + beta * p[i];
            }
        }
        self.apply_padded(&x, &mut q);
        let res: Vec<f64> = b.iter().zip(&q).map(|(b, q)| b - q).collect();
        let residual = dot(&res, &res).sqrt() / bnorm;
        Ok((self.st.unpad(&x), SolveStats { iterations: it, residual }))
    }

    fn precondition(&mut self, r: &[f64], z: &mut [f64]) {
        match &mut self.mg {
            Some(mg) => mg.apply(r, z),
            None => {
                for i in 0..r.len() {
                    z[i] = if self.diag[i] > 0.0 { r[i] / self.diag[i] } else { 0.0 };
                }
            }
        }
    }
}

fn check_tau(tau: f64, h: f64) -> Result<()> {
    if !(tau >= 0.5) {
        return domain(format!("tau must be at least 0.5, got {tau}"));
    }
    if tau * h > 0.5 {
        return config(format!("tau*h = {} exceeds 0.5: decay length under-resolved", tau * h));
    }
    Ok(())
}

/// Solves (mass + absorption·σ − Δ_h)v = source with Neumann obstacles
/// (D included or not) and Dirichlet on the box face.
pub fn solve_modified_helmholtz(
    medium: &Medium,
    include_d: bool,
    source: &ScalarField,
    shift: Shift,
    opts: &SolveOptions,
) -> Result<(LaplaceField, SolveStats)> {
    if source.grid != *medium.grid() {
        return domain("source and medium live on different grids");
    }
    let mut solver = HelmholtzSolver::new(medium, include_d, shift, opts.preconditioner)?;
    let (v, stats) = solver.solve(&source.data, opts)?;
    Ok((LaplaceField { tau: shift.tau, values: ScalarField::from_vec(medium.grid(), v)?, residual: stats.residual }, stats))
}

fn energy_over(field: &ScalarField, mask: &Mask, include_d: bool, tau: f64, keep: impl Fn(Label) -> bool) -> f64 {
    let g = gradient(field, mask, include_d);
    let t2 = tau * tau;
    let mut s = 0.0;
    for idx in 0..field.data.len() {
        if keep(mask.labels[idx]) {
            let (gx, gy, gz) = (g[0].data[idx], g[1].data[idx], g[2].data[idx]);
            s += gx * gx + gy * gy + gz * gz + t2 * field.data[idx] * field.data[idx];
        }
    }
    s * mask.grid.cell_volume()
}

/// J = ∫_D (|∇v|² + τ²v²) for the field solved without D.
pub fn compute_j(v: &LaplaceField, mask: &Mask) -> f64 {
    if !mask.has_d() {
        return 0.0;
    }
    energy_over(&v.values, mask, false, v.tau, |l| l == Label::DSolid)
}

/// E = ∫ (|∇ε|² + τ²ε²) over the fluid cells outside the sponge, ε = w − v.
pub fn compute_e(w: &LaplaceField, v: &LaplaceField, mask: &Mask) -> Result<f64> {
    if w.tau != v.tau {
        return domain(format!("tau mismatch: w at {}, v at {}", w.tau, v.tau));
    }
    let mut eps = w.values.clone();
    for (e, (vv, l)) in eps.data.iter_mut().zip(v.values.data.iter().zip(&mask.labels)) {
        *e = if matches!(l, Label::D0Solid | Label::DSolid) { 0.0 } else { *e - vv };
    }
    Ok(energy_over(&eps, mask, true, w.tau, |l| matches!(l, Label::Exterior | Label::SourceB)))
}

/// Source of the scattered field ε = w − v: with v solved without D, the
/// D-aware solve of ε has right side Σ_{j ∈ D}(v_i − v_j)/h² on the fluid
/// cells touching D.
pub fn scattered_source(v: &ScalarField, mask: &Mask) -> ScalarField {
    let g = &mask.grid;
    let ih2 = 1.0 / (g.h * g.h);
    let mut out = ScalarField::zeros(g);
    let strides = [1, g.dims[0], g.dims[0] * g.dims[1]];
    for idx in 0..g.len() {
        if mask.is_solid(idx, true) {
            continue;
        }
        let c = g.ijk(idx);
        let mut s = 0.0;
        for a in 0..3 {
            if c[a] > 0 && mask.labels[idx - strides[a]] == Label::DSolid {
                s += v.data[idx] - v.data[idx - strides[a]];
            }
            if c[a] + 1 < g.dims[a] && mask.labels[idx + strides[a]] == Label::DSolid {
                s += v.data[idx] - v.data[idx + strides[a]];
            }
        }
        out.data[idx] = s * ih2;
    }
    out
}

/// Terminal term G of the transformed leapfrog record: the trapezoid
/// transform W of the record satisfies A·W = f − G exactly, with A the
/// operator built from `Shift::leapfrog(tau, record.dt)`.
pub fn terminal_defect(record: &WaveRecord, solver: &HelmholtzSolver, medium: &Medium) -> Vec<f64> {
    let sh = solver.shift();
    let dt = record.dt;
    let z = (-sh.tau * dt).exp();
    let zn = (-sh.tau * dt * record.n_steps as f64).exp();
    let un = &record.u_final.data;
    let up = &record.u_next.data;
    let au = solver.apply(un);
    (0..un.len())
        .map(|i| {
            let s = medium.sigma[i];
            zn * ((up[i] - z * un[i]) / dt + 0.5 * s * (up[i] + z * un[i]) + 0.5 * dt * au[i])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BallSpec, ConvexBodySpec, Point3, SceneSpec};
    use crate::grid::{voxelize, Grid3};
    use crate::wavesim::{make_source, run_wave, WaveOptions};

    fn small_scene() -> SceneSpec {
        SceneSpec {
            d0_bodies: vec![ConvexBodySpec::ball(Point3::zeros(), 0.5).unwrap()],
            d_bodies: vec![ConvexBodySpec::ball(Point3::new(1.1, 0.0, 0.0), 0.3).unwrap()],
            source: BallSpec::new(Point3::new(-1.1, 0.0, 0.0), 0.3).unwrap(),
            g_amplitude: 1.0,
        }
    }

    fn setup(h: f64) -> (SceneSpec, Medium) {
        let s = small_scene();
        let g = Grid3::fitted(&s, h, 4, 0.8, &s.source.center).unwrap();
        let m = voxelize(&s, &g).unwrap();
        (s, Medium::with_default_sponge(m))
    }

    #[test]
    fn zero_source_zero_iterations() {
        let (_, med) = setup(0.1);
        let f = ScalarField::zeros(med.grid());
        let (v, st) = solve_modified_helmholtz(&med, false, &f, Shift::continuous(2.0), &SolveOptions::default()).unwrap();
        assert_eq!(st.iterations, 0);
        assert!(v.values.data.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn parameter_checks() {
        let (_, med) = setup(0.1);
        let f = ScalarField::zeros(med.grid());
        let o = SolveOptions::default();
        assert!(matches!(solve_modified_helmholtz(&med, false, &f, Shift::continuous(6.0), &o), Err(Error::Config(_))));
        assert!(matches!(solve_modified_helmholtz(&med, false, &f, Shift::continuous(0.4), &o), Err(Error::Domain(_))));
    }

    #[test]
    fn preconditioners_agree_and_meet_tolerance() {
        let (s, med) = setup(0.1);
        let f = make_source(&s, &med.mask).unwrap();
        let mut out = Vec::new();
        for pre in [Preconditioner::Jacobi, Preconditioner::Multigrid] {
            let opts = SolveOptions { tol: 1e-12, max_iter: None, preconditioner: pre };
            let (v, st) = solve_modified_helmholtz(&med, true, &f.field, Shift::continuous(1.5), &opts).unwrap();
            assert!(st.residual <= 1e-11, "{pre:?} residual {}", st.residual);
            out.push((v, st));
        }
        assert!(out[1].1.iterations < out[0].1.iterations);
        let diff = out[0].0.values.data.iter().zip(&out[1].0.values.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-9 * out[0].0.values.max_abs());
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let (s, med) = setup(0.1);
        let f = make_source(&s, &med.mask).unwrap();
        let opts = SolveOptions { tol: 1e-14, max_iter: Some(2), preconditioner: Preconditioner::Jacobi };
        assert!(matches!(solve_modified_helmholtz(&med, false, &f.field, Shift::continuous(1.0), &opts), Err(Error::Solver(_))));
    }

    #[test]
    fn transformed_record_satisfies_elliptic_identity() {
        let (s, med) = setup(0.1);
        let f = make_source(&s, &med.mask).unwrap();
        let rec = run_wave(&med, &f, 2.0, true, &WaveOptions::default()).unwrap();
        let tau = 1.7;
        let solver = HelmholtzSolver::new(&med, true, Shift::leapfrog(tau, rec.dt), Preconditioner::Jacobi).unwrap();
        let g = terminal_defect(&rec, &solver, &med);
        // Relabel every fluid cell as B so the record holds the full field.
        let grid = med.grid().clone();
        let all = crate::grid::Mask {
            grid: grid.clone(),
            labels: med
                .mask
                .labels
                .iter()
                .map(|l| if matches!(l, Label::Exterior | Label::Sponge) { Label::SourceB } else { *l })
                .collect(),
        };
        let med_all = Medium { mask: all, sigma: med.sigma.clone() };
        let rec_all = run_wave(&med_all, &f, 2.0, true, &WaveOptions::default()).unwrap();
        assert_eq!(rec_all.u_final, rec.u_final);
        let nb = rec_all.b_cells.len();
        let z = (-tau * rec.dt).exp();
        let mut w = vec![0.0; grid.len()];
        for n in 0..=rec_all.n_steps {
            let wt = if n == 0 || n == rec_all.n_steps { 0.5 } else { 1.0 } * rec.dt * z.powi(n as i32);
            for c in 0..nb {
                w[rec_all.b_cells[c]] += wt * rec_all.u_on_b[n * nb + c];
            }
        }
        let aw = solver.apply(&w);
        let scale = f.field.max_abs();
        for i in 0..grid.len() {
            if med.mask.is_solid(i, true) {
                continue;
            }
            let r = aw[i] - (f.field.data[i] - g[i]);
            assert!(r.abs() <= 1e-11 * scale, "cell {i}: residual {r}");
        }
    }

    #[test]
    fn scattered_field_matches_difference_of_solves() {
        let (s, med) = setup(0.1);
        let f = make_source(&s, &med.mask).unwrap();
        let sh = Shift::continuous(1.5);
        let o = SolveOptions::with_tol(1e-13);
        let (v, _) = solve_modified_helmholtz(&med, false, &f.field, sh, &o).unwrap();
        let (w, _) = solve_modified_helmholtz(&med, true, &f.field, sh, &o).unwrap();
        let src = scattered_source(&v.values, &med.mask);
        let (eps, _) = solve_modified_helmholtz(&med, true, &src, sh, &o).unwrap();
        let emax = eps.values.max_abs();
        for i in 0..med.grid().len() {
            if med.mask.is_solid(i, true) {
                continue;
            }
            let d = w.values.data[i] - v.values.data[i] - eps.values.data[i];
            assert!(d.abs() <= 1e-9 * v.values.max_abs(), "cell {i}: {d} vs {emax}");
        }
    }

    #[test]
    fn energies_trivial_cases() {
        let (_, med) = setup(0.1);
        let g = med.grid();
        let zero = LaplaceField { tau: 2.0, values: ScalarField::zeros(g), residual: 0.0 };
        assert_eq!(compute_j(&zero, &med.mask), 0.0);
        let c = LaplaceField { tau: 2.0, values: ScalarField::from_fn(g, |_| 0.3), residual: 0.0 };
        let vol = med.mask.count(Label::DSolid) as f64 * g.cell_volume();
        assert!((compute_j(&c, &med.mask) - 4.0 * 0.09 * vol).abs() < 1e-12);
        assert_eq!(compute_e(&c, &c, &med.mask).unwrap(), 0.0);
        let other = LaplaceField { tau: 1.0, ..c.clone() };
        assert!(compute_e(&c, &other, &med.mask).is_err());
    }

    #[test]
    fn leapfrog_shift_tends_to_continuous() {
        let a = Shift::leapfrog(2.0, 1e-4);
        assert!((a.mass / 4.0 - 1.0).abs() < 1e-8);
        assert!((a.absorption / 2.0 - 1.0).abs() < 1e-8);
    }
}
