//! Indicator functions of the enclosure method: Laplace transforms of the
//! B records, I and I′ along a τ sweep, the presence decision and the
//! distance lower bound.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::elliptic::{
    compute_e, compute_j, scattered_source, terminal_defect, HelmholtzSolver, LaplaceField, Shift, SolveOptions, SolveStats,
};
use crate::error::{domain, Result};
use crate::geometry::SceneSpec;
use crate::grid::{voxelize, Grid3, ScalarField};
use crate::wavesim::{default_sigma_max, make_source, run_wave, Medium, WaveOptions, WaveRecord};

/// Relative size of double-precision cancellation in ∫_B f·(w − V).
pub const CANCELLATION_FLOOR: f64 = 1e-13;

/// Composite trapezoid approximation of ∫₀^T e^{−τt}u(t)dt for samples
/// u(n·dt), n = 0..=N.
pub fn trapezoid_laplace(samples: &[f64], dt: f64, tau: f64) -> f64 {
    let n = samples.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    let z = (-tau * dt).exp();
    let mut w = 1.0;
    let mut s = 0.5 * samples[0];
    for u in &samples[1..n] {
        w *= z;
        s += w * u;
    }
    s += 0.5 * w * z * samples[n];
    s * dt
}

fn transform_weights(record: &WaveRecord, tau: f64) -> Vec<f64> {
    let n = record.n_steps;
    let z = (-tau * record.dt).exp();
    let mut w = Vec::with_capacity(n + 1);
    let mut zn = 1.0;
    for k in 0..=n {
        let half = if k == 0 || k == n { 0.5 } else { 1.0 };
        w.push(half * zn * record.dt);
        zn *= z;
    }
    w
}

/// Per-B-cell trapezoid transform of the record, aligned with `record.b_cells`.
pub fn laplace_transform(record: &WaveRecord, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return domain("tau must be positive");
    }
    let nb = record.b_cells.len();
    let mut out = vec![0.0; nb];
    for (k, w) in transform_weights(record, tau).iter().enumerate() {
        for (o, u) in out.iter_mut().zip(&record.u_on_b[k * nb..(k + 1) * nb]) {
            *o += w * u;
        }
    }
    Ok(out)
}

/// Transform of the difference of two records on the same B cells, taken
/// step by step so equal early samples cancel exactly.
pub fn laplace_transform_difference(a: &WaveRecord, b: &WaveRecord, tau: f64) -> Result<Vec<f64>> {
    if a.b_cells != b.b_cells || a.n_steps != b.n_steps || a.dt != b.dt {
        return domain("records differ in B cells or time stepping");
    }
    if !(tau > 0.0) {
        return domain("tau must be positive");
    }
    let nb = a.b_cells.len();
    let mut out = vec![0.0; nb];
    for (k, w) in transform_weights(a, tau).iter().enumerate() {
        let ra = &a.u_on_b[k * nb..(k + 1) * nb];
        let rb = &b.u_on_b[k * nb..(k + 1) * nb];
        for c in 0..nb {
            out[c] += w * (ra[c] - rb[c]);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValues {
    pub i: Option<f64>,
    pub i_prime: Option<f64>,
}

/// I = ∫_B f(w − v) and I′ = ∫_B f(w − V) from per-B-cell values; either
/// reference may be missing.
pub fn indicator_values(
    w_b: &[f64],
    v_b: Option<&[f64]>,
    cap_v_b: Option<&[f64]>,
    f_b: &[f64],
    cell_volume: f64,
) -> Result<IndicatorValues> {
    let n = w_b.len();
    if f_b.len() != n || v_b.is_some_and(|v| v.len() != n) || cap_v_b.is_some_and(|v| v.len() != n) {
        return domain("B-cell arrays differ in length");
    }
    let pair = |r: &[f64]| cell_volume * (0..n).map(|c| f_b[c] * (w_b[c] - r[c])).sum::<f64>();
    Ok(IndicatorValues { i: v_b.map(pair), i_prime: cap_v_b.map(pair) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSample {
    pub tau: f64,
    pub i: f64,
    pub i_prime: f64,
    pub j: f64,
    pub e: f64,
    pub exp_tt_i: f64,
    pub exp_tt_iprime: f64,
    /// ∫_B f·V, the scale against which I′ is a cancellation.
    pub reference: f64,
    /// ∫_B f·(w^∞ − v) from the elliptic scattered solve.
    pub i_elliptic: f64,
}

impl IndicatorSample {
    pub fn log_abs_iprime(&self) -> f64 {
        self.i_prime.abs().ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSeries {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub samples: Vec<IndicatorSample>,
    pub scene_digest: String,
}

impl IndicatorSeries {
    pub fn new(t_final: f64, samples: Vec<IndicatorSample>, scene_digest: String) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].tau > w[0].tau)) {
            return domain("taus must be strictly increasing");
        }
        Ok(Self { t_final, samples, scene_digest })
    }

    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }

    /// Samples used by the slope fits: the upper ⌈n/2⌉ taus.
    pub fn top_half(&self) -> &[IndicatorSample] {
        let n = self.samples.len();
        &self.samples[n / 2..]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,I,I_prime,J,E,exp_tT_I,exp_tT_Iprime,log_abs_Iprime\n");
        for x in &self.samples {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                x.tau,
                x.i,
                x.i_prime,
                x.j,
                x.e,
                x.exp_tt_i,
                x.exp_tt_iprime,
                x.log_abs_iprime()
            ));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Sponge peak damping; defaults to the wavesim default for the grid.
    pub sigma_max: Option<f64>,
    pub wave: WaveOptions,
    pub solve: SolveOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { sigma_max: None, wave: WaveOptions::default(), solve: SolveOptions::with_tol(1e-10) }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TauStats {
    pub tau: f64,
    pub terminal: SolveStats,
    pub reference: Option<SolveStats>,
    pub scattered: Option<SolveStats>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepTimings {
    pub wave_with_d: f64,
    pub wave_without_d: f64,
    pub elliptic: f64,
}

pub struct SweepOutput {
    pub series: IndicatorSeries,
    pub stats: Vec<TauStats>,
    pub timings: SweepTimings,
    pub with_d: WaveRecord,
    /// None when the scene has no D and the first run serves as both.
    pub without_d: Option<WaveRecord>,
    pub medium: Medium,
}

/// SHA-256 over the canonical JSON of the inputs that determine a sweep.
pub fn scene_digest(scene: &SceneSpec, grid: &Grid3, t_final: f64, taus: &[f64], sigma_max: f64) -> String {
    let doc = serde_json::json!({
        "scene": scene,
        "grid": grid,
        "T": t_final,
        "taus": taus,
        "sigma_max": sigma_max,
    });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Two wave runs (with and without D) shared by every τ, then per τ: the
/// transforms on B, the reference field v, I, I′, J and E.
pub fn sweep(scene: &SceneSpec, grid: &Grid3, t_final: f64, taus: &[f64], opts: &SweepOptions) -> Result<SweepOutput> {
    scene.validate()?;
    if taus.is_empty() || taus.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("taus must be non-empty and strictly increasing");
    }
    for &tau in taus {
        if !(tau >= 0.5) || tau * grid.h > 0.5 {
            return crate::error::config(format!("tau = {tau} violates tau >= 0.5 and tau*h <= 0.5"));
        }
    }
    let mask = voxelize(scene, grid)?;
    let sigma_max = opts.sigma_max.unwrap_or_else(|| default_sigma_max(grid));
    let medium = Medium::new(mask, sigma_max);
    let source = make_source(scene, &medium.mask)?;
    let digest = scene_digest(scene, grid, t_final, taus, sigma_max);
    let has_d = medium.mask.has_d();

    let clock = Instant::now();
    let with_d = run_wave(&medium, &source, t_final, has_d, &opts.wave)?;
    let mut timings = SweepTimings { wave_with_d: clock.elapsed().as_secs_f64(), ..Default::default() };
    log::info!("wave run with D: {} steps in {:.1} s", with_d.n_steps, timings.wave_with_d);
    let without_d = if has_d {
        let clock = Instant::now();
        let r = run_wave(&medium, &source, t_final, false, &opts.wave)?;
        timings.wave_without_d = clock.elapsed().as_secs_f64();
        log::info!("wave run without D in {:.1} s", timings.wave_without_d);
        Some(r)
    } else {
        None
    };
    let rec0 = without_d.as_ref().unwrap_or(&with_d);

    let f_b = source.on_cells(&rec0.b_cells);
    let vol = grid.cell_volume();
    let mut samples = Vec::with_capacity(taus.len());
    let mut stats = Vec::with_capacity(taus.len());
    let clock_all = Instant::now();
    for &tau in taus {
        let clock = Instant::now();
        let shift = Shift::leapfrog(tau, rec0.dt);
        let mut a0 = HelmholtzSolver::new(&medium, false, shift, opts.solve.preconditioner)?;
        // v = V + A₀⁻¹G₀ exactly, so I = I′ − ∫_B f·A₀⁻¹G₀.
        let g0 = terminal_defect(rec0, &a0, &medium);
        let (delta, terminal) = a0.solve(&g0, &opts.solve)?;
        let cap_v = laplace_transform(rec0, tau)?;
        let diff = laplace_transform_difference(&with_d, rec0, tau)?;
        let i_prime = vol * f_b.iter().zip(&diff).map(|(f, d)| f * d).sum::<f64>();
        let corr = vol * rec0.b_cells.iter().zip(&f_b).map(|(&c, f)| f * delta[c]).sum::<f64>();
        let reference = vol * f_b.iter().zip(&cap_v).map(|(f, v)| f * v).sum::<f64>();
        let i = i_prime - corr;

        let mut st = TauStats { tau, terminal, ..Default::default() };
        let (j, e, i_elliptic) = if has_d {
            let (v, sv) = a0.solve(&source.field.data, &opts.solve)?;
            drop(a0);
            let v = LaplaceField { tau, values: ScalarField::from_vec(grid, v)?, residual: sv.residual };
            let j = compute_j(&v, &medium.mask);
            let src = scattered_source(&v.values, &medium.mask);
            let mut ad = HelmholtzSolver::new(&medium, true, shift, opts.solve.preconditioner)?;
            let (eps, se) = ad.solve(&src.data, &opts.solve)?;
            let i_ell = vol * rec0.b_cells.iter().zip(&f_b).map(|(&c, f)| f * eps[c]).sum::<f64>();
            let mut w = v.values.clone();
            for (w, e) in w.data.iter_mut().zip(&eps) {
                *w += e;
            }
            let w = LaplaceField { tau, values: w, residual: se.residual };
            let e = compute_e(&w, &v, &medium.mask)?;
            st.reference = Some(sv);
            st.scattered = Some(se);
            (j, e, i_ell)
        } else {
            (0.0, 0.0, 0.0)
        };
        let et = (tau * t_final).exp();
        samples.push(IndicatorSample { tau, i, i_prime, j, e, exp_tt_i: et * i, exp_tt_iprime: et * i_prime, reference, i_elliptic });
        st.seconds = clock.elapsed().as_secs_f64();
        log::info!("tau {tau}: I' {i_prime:e}, I {i:e}, J {j:e}, E {e:e} ({:.1} s)", st.seconds);
        stats.push(st);
    }
    timings.elliptic = clock_all.elapsed().as_secs_f64();
    Ok(SweepOutput { series: IndicatorSeries::new(t_final, samples, digest)?, stats, timings, with_d, without_d, medium })
}

/// Ordinary least squares fit y ≈ slope·x + intercept.
pub fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return domain("least squares needs at least two paired points");
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return domain("least squares abscissae are all equal");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub present: bool,
    /// Slope of τ ↦ log(e^{τT}|I′|) over the top half of the sweep.
    pub growth_slope: f64,
    /// a in log|I′| ≈ 2aτ + b over the same samples.
    pub half_log_slope: f64,
    pub dist_lower_bound: f64,
    pub constant_used: f64,
    /// growth_slope − threshold.
    pub margin: f64,
    /// Every top-half |I′| is at or below the numerical floor.
    pub at_floor: bool,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub scene_digest: String,
}

/// Presence decision: the growth slope must exceed `threshold_slope` and
/// some top-half |I′| must exceed the floor. The floor is `control` (an I′
/// magnitude from a D-free run) times 10 when given, else the cancellation
/// floor relative to ∫_B f·V.
pub fn decide(series: &IndicatorSeries, threshold_slope: f64, constant: f64, control: Option<f64>) -> Result<Verdict> {
    if series.samples.len() < 4 {
        return domain("decision needs at least 4 samples");
    }
    if !(constant > 0.0) {
        return domain("constant must be positive");
    }
    let top = series.top_half();
    let above = top.iter().any(|s| {
        let floor = match control {
            Some(c) => 10.0 * c.abs(),
            None => CANCELLATION_FLOOR * s.reference.abs(),
        };
        s.i_prime.abs() > floor
    });
    let usable: Vec<&IndicatorSample> = top.iter().filter(|s| s.i_prime != 0.0).collect();
    let (slope, growth) = if usable.len() >= 2 && usable.len() == top.len() {
        let x: Vec<f64> = usable.iter().map(|s| s.tau).collect();
        let y: Vec<f64> = usable.iter().map(|s| s.log_abs_iprime()).collect();
        let (m, _) = ols(&x, &y)?;
        (m, m + series.t_final)
    } else {
        (f64::NAN, f64::NAN)
    };
    let half = 0.5 * slope;
    let present = above && growth > threshold_slope;
    let bound = if half.is_finite() { (-half / constant).max(0.0) } else { 0.0 };
    Ok(Verdict {
        present,
        growth_slope: growth,
        half_log_slope: half,
        dist_lower_bound: bound,
        constant_used: constant,
        margin: growth - threshold_slope,
        at_floor: !above,
        t_final: series.t_final,
        scene_digest: series.scene_digest.clone(),
    })
}

/// max(0, −a/constant) from the half-log slope; only for present verdicts.
pub fn range_lower_bound(series: &IndicatorSeries, constant: f64) -> Result<f64> {
    let v = decide(series, 0.0, constant, None)?;
    if !v.present {
        return domain("range bound requested for a series without a present verdict");
    }
    Ok(v.dist_lower_bound)
}
