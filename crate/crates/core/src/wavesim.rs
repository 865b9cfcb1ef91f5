//! Leapfrog time stepping of the unit-speed wave equation outside
//! sound-hard obstacles, with a graded absorbing sponge at the box edge.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::{Point3, SceneSpec};
use crate::grid::{Grid3, Label, Mask, ScalarField};
use crate::stencil::{dot, ObstacleBc, Stencil};

pub const DEFAULT_SAFETY: f64 = 0.9;
/// Peak damping for the quadratic profile, in units of 1/(sponge width).
pub const DEFAULT_SPONGE_STRENGTH: f64 = 16.0;
/// Default sponge width in length units.
pub const DEFAULT_SPONGE_WIDTH: f64 = 3.0;
const BLOWUP_FACTOR: f64 = 1e6;
const CHECK_EVERY: usize = 16;

/// Damping profile σ(x): zero in the interior, rising quadratically to
/// `sigma_max` over the `sponge_thickness` outermost cells.
pub fn sponge_profile(grid: &Grid3, sigma_max: f64) -> Vec<f64> {
    let l = grid.sponge_thickness;
    let mut out = vec![0.0; grid.len()];
    if l == 0 {
        return out;
    }
    for k in 0..grid.dims[2] {
        for j in 0..grid.dims[1] {
            for i in 0..grid.dims[0] {
                let d = grid.face_depth(i, j, k);
                if d < l {
                    let s = (l as f64 - d as f64 - 0.5) / l as f64;
                    out[grid.index(i, j, k)] = sigma_max * s * s;
                }
            }
        }
    }
    out
}

/// σ_max giving the default strength for a sponge of this grid.
pub fn default_sigma_max(grid: &Grid3) -> f64 {
    DEFAULT_SPONGE_STRENGTH / (grid.sponge_thickness.max(1) as f64 * grid.h)
}

/// Mask plus sponge damping: everything the discrete operators need.
#[derive(Clone, Debug)]
pub struct Medium {
    pub mask: Mask,
    pub sigma: Vec<f64>,
}

impl Medium {
    pub fn new(mask: Mask, sigma_max: f64) -> Self {
        let sigma = sponge_profile(&mask.grid, sigma_max);
        Self { mask, sigma }
    }

    pub fn with_default_sponge(mask: Mask) -> Self {
        let s = default_sigma_max(&mask.grid);
        Self::new(mask, s)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.mask.grid
    }
}

#[derive(Clone, Debug)]
pub struct SourceField {
    pub field: ScalarField,
    pub center: Point3,
    pub eta: f64,
    pub g: f64,
}

impl SourceField {
    /// Values on the source cells, in the order of `Mask::cells(SourceB)`.
    pub fn on_cells(&self, cells: &[usize]) -> Vec<f64> {
        cells.iter().map(|&c| self.field.data[c]).collect()
    }
}

/// f = (η − |x − p|)² g on the cells labelled as source, 0 elsewhere.
pub fn make_source(scene: &SceneSpec, mask: &Mask) -> Result<SourceField> {
    let grid = &mask.grid;
    let eta = scene.source.radius;
    if 2.0 * eta / grid.h < 4.0 {
        return config(format!("source ball under-resolved: {:.2} cells across its diameter (need 4)", 2.0 * eta / grid.h));
    }
    let p = scene.source.center;
    let g = scene.g_amplitude;
    let mut field = ScalarField::zeros(grid);
    for (idx, l) in mask.labels.iter().enumerate() {
        if *l == Label::SourceB {
            let r = (grid.center(idx) - p).norm();
            field.data[idx] = (eta - r).max(0.0).powi(2) * g;
        }
    }
    Ok(SourceField { field, center: p, eta, g })
}

pub fn cfl_dt(grid: &Grid3, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return domain(format!("CFL safety must lie in ]0, 1], got {safety}"));
    }
    Ok(safety * grid.h / 3f64.sqrt())
}

/// Number of steps and the step that lands exactly on `t_final`.
pub fn time_steps(grid: &Grid3, t_final: f64, safety: f64) -> Result<(usize, f64)> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return domain(format!("final time must be positive, got {t_final}"));
    }
    let dt = cfl_dt(grid, safety)?;
    let n = (t_final / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, t_final / n as f64))
}

#[derive(Clone, Debug)]
pub struct WaveOptions {
    pub safety: f64,
    /// Overrides the CFL step (and the exact landing on T); for probes.
    pub dt_override: Option<f64>,
    /// Record the discrete energy every this many steps.
    pub energy_every: Option<usize>,
    /// Dump u every this many steps into the directory.
    pub dump: Option<(PathBuf, usize)>,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { safety: DEFAULT_SAFETY, dt_override: None, energy_every: None, dump: None }
    }
}

#[derive(Clone, Debug)]
pub struct WaveRecord {
    pub dt: f64,
    pub n_steps: usize,
    pub include_d: bool,
    pub b_cells: Vec<usize>,
    /// uⁿ at `b_cells[c]` is `u_on_b[n * b_cells.len() + c]`, n = 0..=n_steps.
    pub u_on_b: Vec<f64>,
    pub u_final: ScalarField,
    pub ut_final: ScalarField,
    /// u at step n_steps + 1.
    pub u_next: ScalarField,
    /// (time, staggered energy) pairs when requested.
    pub energy: Vec<(f64, f64)>,
}

impl WaveRecord {
    pub fn t_final(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn series(&self, c: usize) -> Vec<f64> {
        let nb = self.b_cells.len();
        (0..=self.n_steps).map(|n| self.u_on_b[n * nb + c]).collect()
    }

    pub fn write_b_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "step,time,cell_index,u")?;
        let nb = self.b_cells.len();
        for n in 0..=self.n_steps {
            let t = n as f64 * self.dt;
            for (c, &cell) in self.b_cells.iter().enumerate() {
                writeln!(w, "{n},{t:.17e},{cell},{:.17e}", self.u_on_b[n * nb + c])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Precomputed leapfrog coefficients on the padded layout:
/// u⁺ = c0·u + c1·(neighbour sum) − c2·u⁻.
pub(crate) struct Leapfrog {
    pub st: Stencil,
    c0: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
}

impl Leapfrog {
    pub fn new(medium: &Medium, include_d: bool, dt: f64) -> Self {
        let st = Stencil::new(&medium.mask, include_d, ObstacleBc::Neumann);
        let sig = st.pad(&medium.sigma);
        let r = dt * dt / (st.h * st.h);
        let mut c0 = vec![0.0; st.len];
        let mut c1 = vec![0.0; st.len];
        let mut c2 = vec![0.0; st.len];
        for p in 0..st.len {
            let s = 0.5 * sig[p] * dt;
            let a = st.active[p] / (1.0 + s);
            c0[p] = a * (2.0 - st.arms[p] * r);
            c1[p] = a * r;
            c2[p] = a * (1.0 - s);
        }
        Self { st, c0, c1, c2 }
    }

    /// Overwrites `prev` with the next time level.
    pub fn step(&self, cur: &[f64], prev: &mut [f64]) {
        let (nx, sy, sz) = (self.st.n[0], self.st.sy, self.st.sz);
        self.st.for_rows(|b| {
            let xc = &cur[b..b + nx];
            let xw = &cur[b - 1..b - 1 + nx];
            let xe = &cur[b + 1..b + 1 + nx];
            let xs = &cur[b - sy..b - sy + nx];
            let xn = &cur[b + sy..b + sy + nx];
            let xd = &cur[b - sz..b - sz + nx];
            let xu = &cur[b + sz..b + sz + nx];
            let c0 = &self.c0[b..b + nx];
            let c1 = &self.c1[b..b + nx];
            let c2 = &self.c2[b..b + nx];
            let pr = &mut prev[b..b + nx];
            for i in 0..nx {
                let nb = xw[i] + xe[i] + xs[i] + xn[i] + xd[i] + xu[i];
                pr[i] = c0[i] * xc[i] + c1[i] * nb - c2[i] * pr[i];
            }
        });
    }

    /// −⟨a, L b⟩ h³ with the Neumann Laplacian.
    fn stiffness(&self, a: &[f64], b: &[f64]) -> f64 {
        let ih2 = 1.0 / (self.st.h * self.st.h);
        let diag: Vec<f64> = self.st.arms.iter().map(|v| v * ih2).collect();
        let off: Vec<f64> = self.st.active.iter().map(|v| v * ih2).collect();
        let mut lb = vec![0.0; self.st.len];
        self.st.apply_split(&diag, &off, b, &mut lb);
        dot(a, &lb) * self.st.h.powi(3)
    }
}

/// Staggered leapfrog energy between levels `u` (earlier) and `up` (later).
fn staggered_energy(lf: &Leapfrog, u: &[f64], up: &[f64], dt: f64) -> f64 {
    let diff: Vec<f64> = up.iter().zip(u).map(|(a, b)| (a - b) / dt).collect();
    0.5 * dot(&diff, &diff) * lf.st.h.powi(3) + 0.5 * lf.stiffness(up, u)
}

/// Runs the leapfrog scheme from u⁰ = 0, u¹ = dt·f up to `t_final`,
/// recording u on every source cell.
pub fn run_wave(medium: &Medium, source: &SourceField, t_final: f64, include_d: bool, opts: &WaveOptions) -> Result<WaveRecord> {
    let grid = medium.grid();
    if source.field.grid != *grid {
        return domain("source and medium live on different grids");
    }
    make_source_check(grid, source)?;
    let (n_steps, dt) = match opts.dt_override {
        Some(dt) => {
            if !(dt > 0.0 && t_final > 0.0) {
                return domain("dt and final time must be positive");
            }
            ((t_final / dt).round().max(1.0) as usize, dt)
        }
        None => time_steps(grid, t_final, opts.safety)?,
    };
    let lf = Leapfrog::new(medium, include_d, dt);
    let st = &lf.st;
    let b_cells = medium.mask.cells(Label::SourceB);
    let b_pad: Vec<usize> = b_cells
        .iter()
        .map(|&c| {
            let [i, j, k] = grid.ijk(c);
            st.pidx(i, j, k)
        })
        .collect();
    let nb = b_cells.len();
    let mut u_on_b = vec![0.0; (n_steps + 1) * nb];

    let mut prev = vec![0.0; st.len];
    let fpad = st.pad(&source.field.data);
    let mut cur: Vec<f64> = fpad.iter().zip(&st.active).map(|(f, a)| dt * f * a).collect();
    let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut energy = Vec::new();
    for (c, &p) in b_pad.iter().enumerate() {
        u_on_b[nb + c] = cur[p];
    }
    if let Some(every) = opts.energy_every {
        if every > 0 {
            energy.push((0.5 * dt, staggered_energy(&lf, &prev, &cur, dt)));
        }
    }
    let dump = |n: usize, u: &[f64]| -> Result<()> {
        if let Some((dir, every)) = &opts.dump {
            if *every > 0 && n % every == 0 {
                let f = ScalarField::from_vec(grid, st.unpad(u))?;
                f.write_binary(dir, &format!("u_{n:06}"))?;
            }
        }
        Ok(())
    };
    dump(1, &cur)?;
    // Invariant at the top of the loop: cur = uⁿ, prev = uⁿ⁻¹.
    for n in 1..n_steps {
        lf.step(&cur, &mut prev);
        std::mem::swap(&mut cur, &mut prev);
        for (c, &p) in b_pad.iter().enumerate() {
            u_on_b[(n + 1) * nb + c] = cur[p];
        }
        if let Some(every) = opts.energy_every {
            if every > 0 && (n + 1) % every == 0 {
                energy.push(((n as f64 + 0.5) * dt, staggered_energy(&lf, &prev, &cur, dt)));
            }
        }
        if (n + 1) % CHECK_EVERY == 0 && scale > 0.0 {
            let m = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(m <= BLOWUP_FACTOR * scale) {
                return Err(Error::Instability(format!(
                    "max |u| = {m:.3e} exceeds {BLOWUP_FACTOR:.0e} x initial scale {scale:.3e} at step {}",
                    n + 1
                )));
            }
        }
        dump(n + 1, &cur)?;
    }
    // One extra step for the terminal velocity.
    let u_nm1 = prev.clone();
    lf.step(&cur, &mut prev);
    let u_np1 = prev;
    let ut: Vec<f64> = u_np1.iter().zip(&u_nm1).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
    Ok(WaveRecord {
        dt,
        n_steps,
        include_d,
        b_cells,
        u_on_b,
        u_final: ScalarField::from_vec(grid, st.unpad(&cur))?,
        ut_final: ScalarField::from_vec(grid, st.unpad(&ut))?,
        u_next: ScalarField::from_vec(grid, st.unpad(&u_np1))?,
        energy,
    })
}

fn make_source_check(grid: &Grid3, source: &SourceField) -> Result<()> {
    if 2.0 * source.eta / grid.h < 4.0 {
        return config("source ball under-resolved (< 4 cells across its diameter)");
    }
    Ok(())
}

/// Settings of a one-dimensional probe of the sponge: a pulse travelling
/// along a line of cells into a sponge of `cells` cells.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpongeProbe {
    pub h: f64,
    pub cells: usize,
    pub strength: f64,
    pub safety: f64,
    pub pulse: ProbePulse,
}

/// Incident pulse shapes: a Gaussian bump (nonzero mean, like the
/// outgoing wave of a positive source) and its zero-mean second derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbePulse {
    Gaussian,
    Ricker,
}

/// Peak amplitude reflected by the sponge relative to the incident peak,
/// for a smooth pulse at normal incidence. Uses the same profile and update
/// as the 3D scheme restricted to one axis (a plane wave along x), and
/// subtracts a run on a long sponge-free line so only the sponge's echo
/// remains.
pub fn sponge_reflection(probe: &SpongeProbe) -> f64 {
    let h = probe.h;
    let l = probe.cells;
    let dt = probe.safety * h / 3f64.sqrt();
    let r = dt * dt / (h * h);
    let interior = (8.0 / h) as usize;
    let x0 = 2.0;
    let probe_i = (4.0 / h) as usize;
    let t_pass = 4.0;
    // Long enough for the part transmitted through the sponge to come back
    // off the box wall.
    let t_end = 2.0 * ((interior + l) as f64 * h - 4.0) + 6.0;
    let steps = (t_end / dt) as usize;
    let shape = probe.pulse;
    let pulse = |x: f64, t: f64| {
        let s = (x - x0 - t) / 0.4;
        match shape {
            ProbePulse::Gaussian => (-s * s).exp(),
            ProbePulse::Ricker => (1.0 - 2.0 * s * s) * (-s * s).exp(),
        }
    };

    let run = |n: usize, sponge: bool| -> Vec<f64> {
        let sigma_max = probe.strength / (l as f64 * h);
        let sigma: Vec<f64> = (0..n)
            .map(|i| {
                if sponge && i + l >= n {
                    let d = n - 1 - i;
                    let s = (l as f64 - d as f64 - 0.5) / l as f64;
                    sigma_max * s * s
                } else {
                    0.0
                }
            })
            .collect();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let mut prev: Vec<f64> = xs.iter().map(|&x| pulse(x, -dt)).collect();
        let mut cur: Vec<f64> = xs.iter().map(|&x| pulse(x, 0.0)).collect();
        let mut next = vec![0.0; n];
        let mut trace = Vec::with_capacity(steps);
        for _ in 0..steps {
            for i in 0..n {
                let left = if i == 0 { cur[0] } else { cur[i - 1] };
                let right = if i + 1 == n { 0.0 } else { cur[i + 1] };
                let sd = 0.5 * sigma[i] * dt;
                next[i] = (2.0 * cur[i] - (1.0 - sd) * prev[i] + r * (left - 2.0 * cur[i] + right)) / (1.0 + sd);
            }
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            trace.push(cur[probe_i]);
        }
        trace
    };
    let with = run(interior + l, true);
    let reference = run(interior + (t_end / h) as usize + 8, false);
    let mut incident = 0.0f64;
    let mut reflected = 0.0f64;
    for s in 0..steps {
        let t = (s + 1) as f64 * dt;
        if t < t_pass {
            incident = incident.max(reference[s].abs());
        } else {
            reflected = reflected.max((with[s] - reference[s]).abs());
        }
    }
    reflected / incident
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BallSpec;
    use crate::grid::voxelize;

    fn free_scene(eta: f64) -> SceneSpec {
        SceneSpec { d0_bodies: vec![], d_bodies: vec![], source: BallSpec::new(Point3::zeros(), eta).unwrap(), g_amplitude: 1.0 }
    }

    #[test]
    fn cfl_examples() {
        let g = Grid3::new(Point3::zeros(), 0.0625, [16; 3], 0).unwrap();
        assert!((cfl_dt(&g, 0.9).unwrap() - 0.032_476).abs() < 1e-6);
        let g = Grid3::new(Point3::zeros(), 3f64.sqrt(), [16; 3], 0).unwrap();
        assert!((cfl_dt(&g, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(cfl_dt(&g, 1.5).is_err());
    }

    #[test]
    fn source_values() {
        let s = free_scene(0.4);
        let g = Grid3::fitted(&s, 0.0625, 2, 0.5, &s.source.center).unwrap();
        let m = voxelize(&s, &g).unwrap();
        let f = make_source(&s, &m).unwrap();
        let c = g.locate(&Point3::zeros()).unwrap();
        assert!((f.field.data[c] - 0.16).abs() < 1e-15);
        assert!(f.field.data.iter().all(|v| *v <= 0.4f64.powi(2)));
        let vol = crate::grid::integrate(&f.field, &m, Label::SourceB);
        let exact = 4.0 * std::f64::consts::PI * 0.4f64.powi(5) / 30.0;
        assert!((vol / exact - 1.0).abs() < 0.03);
        let coarse = Grid3::fitted(&s, 0.25, 2, 1.1, &s.source.center).unwrap();
        let mc = voxelize(&s, &coarse).unwrap();
        assert!(matches!(make_source(&s, &mc), Err(Error::Config(_))));
    }

    #[test]
    fn zero_source_gives_zero_record() {
        let mut s = free_scene(0.4);
        s.g_amplitude = 1e-300;
        let g = Grid3::fitted(&s, 0.1, 4, 0.7, &s.source.center).unwrap();
        let m = voxelize(&s, &g).unwrap();
        let mut f = make_source(&s, &m).unwrap();
        f.field.data.iter_mut().for_each(|v| *v = 0.0);
        let med = Medium::with_default_sponge(m);
        let rec = run_wave(&med, &f, 1.0, true, &WaveOptions::default()).unwrap();
        assert!(rec.u_on_b.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn energy_conserved_without_damping() {
        let s = free_scene(0.4);
        let g = Grid3::fitted(&s, 0.1, 4, 1.5, &s.source.center).unwrap();
        let m = voxelize(&s, &g).unwrap();
        let f = make_source(&s, &m).unwrap();
        let med = Medium::new(m, 0.0);
        let opts = WaveOptions { energy_every: Some(5), ..Default::default() };
        let rec = run_wave(&med, &f, 3.0, true, &opts).unwrap();
        let e0 = rec.energy[0].1;
        for (_, e) in &rec.energy {
            assert!((e / e0 - 1.0).abs() < 1e-10);
        }
        assert!(rec.u_on_b[..rec.b_cells.len()].iter().all(|v| *v == 0.0));
        assert!((rec.t_final() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sponge_reflection_levels() {
        let probe = |cells, strength, pulse| sponge_reflection(&SpongeProbe { h: 0.0625, cells, strength, safety: DEFAULT_SAFETY, pulse });
        let cells = (DEFAULT_SPONGE_WIDTH / 0.0625) as usize;
        // Zero-mean pulses are absorbed to a few 1e-3. The mean of a bump
        // sees the sponge as an impedance jump and comes back at ~10%.
        let bare = probe(cells, 0.0, ProbePulse::Ricker);
        let r = probe(cells, DEFAULT_SPONGE_STRENGTH, ProbePulse::Ricker);
        assert!(bare > 0.5);
        assert!(r < 6e-3, "ricker reflection {r}");
        let r = probe(cells, DEFAULT_SPONGE_STRENGTH, ProbePulse::Gaussian);
        assert!(r < 0.15, "gaussian reflection {r}");
    }
}
