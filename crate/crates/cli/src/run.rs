//! End-to-end experiment: plan, sweep, decision, ranging, artifacts.
//!
//! `indicator.csv`, `verdict.json` and `result.json` depend only on the
//! configuration; wall-clock data goes to `provenance.json`.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use enclosure_core::geometry::dist_sets;
use enclosure_core::indicator::{decide, sweep, IndicatorSeries, SweepOptions, SweepTimings, TauStats, Verdict};
use enclosure_core::wavesim::WaveOptions;

use crate::config::{ExperimentConfig, Plan};
use crate::{create_dir, write_file, CliError};

/// Presence threshold on the growth slope of e^{τT}|I′|.
pub const DEFAULT_THRESHOLD: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub dir: PathBuf,
    pub indicator_csv: PathBuf,
    pub verdict_json: PathBuf,
    pub result_json: PathBuf,
    pub provenance_json: PathBuf,
    pub config_json: PathBuf,
    #[serde(default)]
    pub verification_json: Option<PathBuf>,
    #[serde(default)]
    pub records: Vec<PathBuf>,
    #[serde(default)]
    pub fields: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub code_version: String,
    pub timings: SweepTimings,
    pub total_seconds: f64,
    pub per_tau: Vec<TauStats>,
    pub timestamp_unix: u64,
}

/// Deterministic summary of a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub config_digest: String,
    pub scene_digest: String,
    pub seed: u64,
    pub plan: PlanSummary,
    pub verdict: Verdict,
    /// Only for present verdicts.
    pub range_lower_bound: Option<f64>,
    /// dist(D, B) from the scene geometry, when D is given.
    pub dist_true: Option<f64>,
    pub wave_steps: usize,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanSummary {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub sponge_cells: usize,
    pub sigma_max: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub taus: Vec<f64>,
    pub constant: f64,
    pub cone_condition: Option<bool>,
}

impl From<&Plan> for PlanSummary {
    fn from(p: &Plan) -> Self {
        let g = &p.grid;
        Self {
            dims: g.dims,
            origin: [g.origin.x, g.origin.y, g.origin.z],
            h: g.h,
            sponge_cells: g.sponge_thickness,
            sigma_max: p.sigma_max,
            t_final: p.t_final,
            taus: p.taus.clone(),
            constant: p.constant,
            cone_condition: p.cone_condition,
        }
    }
}

pub struct RunOutcome {
    pub bundle: ResultBundle,
    pub result: RunResult,
    pub series: IndicatorSeries,
    pub provenance: Provenance,
}

/// SHA-256 of the normalized configuration with the output path blanked,
/// so that the same experiment written elsewhere has the same digest.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.outputs = PathBuf::new();
    hex::encode(Sha256::digest(c.to_json().as_bytes()))
}

/// Runs the pipeline and writes every artifact into `cfg.outputs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let clock = Instant::now();
    let plan = cfg.plan()?;
    let dir = cfg.outputs.clone();
    create_dir(&dir)?;
    log::info!("grid {:?}, h {}, T {:.4}, {} taus", plan.grid.dims, plan.grid.h, plan.t_final, plan.taus.len());

    let opts = SweepOptions { sigma_max: Some(plan.sigma_max), wave: WaveOptions::default(), ..Default::default() };
    let out = sweep(&cfg.scene, &plan.grid, plan.t_final, &plan.taus, &opts).map_err(CliError::stage("indicator sweep"))?;
    let verdict = decide(&out.series, DEFAULT_THRESHOLD, plan.constant, None).map_err(CliError::stage("decision"))?;
    let range_lower_bound = verdict.present.then_some(verdict.dist_lower_bound);
    let dist_true = cfg.scene.has_d().then(|| dist_sets(&[cfg.scene.source.as_body()], &cfg.scene.d_bodies));

    let digest = config_digest(cfg);
    let result = RunResult {
        config_digest: digest.clone(),
        scene_digest: out.series.scene_digest.clone(),
        seed: cfg.seed,
        plan: PlanSummary::from(&plan),
        verdict: verdict.clone(),
        range_lower_bound,
        dist_true,
        wave_steps: out.with_d.n_steps,
        dt: out.with_d.dt,
    };

    let mut bundle = ResultBundle {
        dir: dir.clone(),
        indicator_csv: dir.join("indicator.csv"),
        verdict_json: dir.join("verdict.json"),
        result_json: dir.join("result.json"),
        provenance_json: dir.join("provenance.json"),
        config_json: dir.join("config.json"),
        verification_json: None,
        records: Vec::new(),
        fields: Vec::new(),
    };
    write_file(&bundle.indicator_csv, out.series.to_csv())?;
    write_file(&bundle.verdict_json, to_json(&verdict))?;
    write_file(&bundle.result_json, to_json(&result))?;
    write_file(&bundle.config_json, cfg.to_json())?;

    if cfg.write_records {
        let runs = [Some((&out.with_d, "records_with_d.csv")), out.without_d.as_ref().map(|r| (r, "records_without_d.csv"))];
        for (rec, name) in runs.into_iter().flatten() {
            let path = dir.join(name);
            rec.write_b_csv(&path).map_err(CliError::stage("record output"))?;
            bundle.records.push(path);
        }
    }
    if cfg.dump_fields {
        let mut fields = vec![("u_final_with_d", &out.with_d.u_final), ("ut_final_with_d", &out.with_d.ut_final)];
        if let Some(r) = &out.without_d {
            fields.push(("u_final_without_d", &r.u_final));
            fields.push(("ut_final_without_d", &r.ut_final));
        }
        for (name, field) in fields {
            field.write_binary(&dir, name).map_err(CliError::stage("field output"))?;
            bundle.fields.push(name.to_string());
        }
    }

    let provenance = Provenance {
        config_digest: digest,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        timings: out.timings.clone(),
        total_seconds: clock.elapsed().as_secs_f64(),
        per_tau: out.stats.clone(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_file(&bundle.provenance_json, to_json(&provenance))?;
    write_file(&dir.join("bundle.json"), to_json(&bundle))?;
    Ok(RunOutcome { bundle, result, series: out.series, provenance })
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldSummary {
    pub name: String,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub min: f64,
    pub max: f64,
    pub l2: f64,
}

/// Reads a binary field dump, summarizes it and optionally writes it as CSV.
pub fn dump_field(run_dir: &Path, name: &str, csv: Option<&Path>) -> Result<FieldSummary, CliError> {
    let (header, data) = enclosure_core::grid::ScalarField::read_binary(run_dir, name).map_err(CliError::stage("field read"))?;
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l2 = (data.iter().map(|v| v * v).sum::<f64>() * header.h.powi(3)).sqrt();
    if let Some(path) = csv {
        let [nx, ny, _] = header.dims;
        let mut s = String::from("i,j,k,x,y,z,value\n");
        for (idx, v) in data.iter().enumerate() {
            let (i, j, k) = (idx % nx, (idx / nx) % ny, idx / (nx * ny));
            let c = |n: usize, o: f64| o + (n as f64 + 0.5) * header.h;
            s.push_str(&format!("{i},{j},{k},{},{},{},{v:e}\n", c(i, header.origin[0]), c(j, header.origin[1]), c(k, header.origin[2])));
        }
        write_file(path, s)?;
    }
    Ok(FieldSummary { name: header.name, dims: header.dims, origin: header.origin, h: header.h, min, max, l2 })
}
