//! Experiment configuration: JSON in, validated run plan out.
//!
//! Units: lengths in L, times in L/c with wave speed c = 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use enclosure_core::geometry::{ball_samples, cone_contains, detour_constant, BallSpec, DetourKind, Point3, SceneSpec};
use enclosure_core::grid::{scene_bounds, Grid3};
use enclosure_core::wavesim::{DEFAULT_SPONGE_STRENGTH, DEFAULT_SPONGE_WIDTH};

use crate::CliError;

/// Box clearance needed per unit of decay length 1/τ_min.
pub const CLEARANCE_DECAY_LENGTHS: f64 = 4.0;
const CONE_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FinalTime {
    /// 2·constant·M.
    Auto,
    Value(f64),
}

impl Serialize for FinalTime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FinalTime::Auto => s.serialize_str("auto"),
            FinalTime::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for FinalTime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(FinalTime::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(FinalTime::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("T must be a number or \"auto\", got {t:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl TauSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            TauSpec::List(v) => Ok(v.clone()),
            TauSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(CliError::Validation("tau range needs step > 0 and stop >= start".into()));
                }
                let n = (stop - start) / step;
                if (n - n.round()).abs() > 1e-9 {
                    return Err(CliError::Validation("tau range stop is not start plus a whole number of steps".into()));
                }
                Ok((0..=n.round() as usize).map(|k| start + step * k as f64).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lower: Point3,
    pub upper: Point3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// Gap between the bodies (and B) and the box face; defaults to 4/τ_min.
    #[serde(default)]
    pub clearance: Option<f64>,
    /// Explicit box; overrides `clearance`.
    #[serde(default, rename = "box")]
    pub extents: Option<BoxSpec>,
    #[serde(default = "default_sponge_width")]
    pub sponge_width: f64,
    #[serde(default = "default_sponge_strength")]
    pub sponge_strength: f64,
}

fn default_sponge_width() -> f64 {
    DEFAULT_SPONGE_WIDTH
}

fn default_sponge_strength() -> f64 {
    DEFAULT_SPONGE_STRENGTH
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub grid: GridConfig,
    #[serde(rename = "T")]
    pub t_final: FinalTime,
    /// A-priori bound on dist(D, B).
    #[serde(rename = "M", default)]
    pub m: Option<f64>,
    pub taus: TauSpec,
    /// Cone parameter for convex D₀; selects the constant C(α).
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Write the B-patch time records as CSV.
    #[serde(default)]
    pub write_records: bool,
    /// Write terminal wave fields in the binary field format.
    #[serde(default)]
    pub dump_fields: bool,
}

/// Everything a run needs, after validation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub grid: Grid3,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub taus: Vec<f64>,
    pub constant: f64,
    pub sigma_max: f64,
    /// Sampled D ⊂ V_α(B; D₀) when α is given and D₀ is a single body.
    pub cone_condition: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Normalized JSON: every defaulted field written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn constant(&self) -> Result<f64, CliError> {
        let kind = match self.alpha {
            Some(alpha) => DetourKind::Convex { alpha },
            None => DetourKind::Ball,
        };
        detour_constant(kind).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Checks every precondition of the pipeline before any solve.
    pub fn plan(&self) -> Result<Plan, CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        self.scene.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let h = self.grid.h;
        if !(h > 0.0) {
            return bad(format!("grid spacing h must be positive, got {h}"));
        }
        let taus = self.taus.values()?;
        if taus.len() < 4 {
            return bad(format!("the slope fits need at least 4 taus, got {}", taus.len()));
        }
        if taus.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("taus must be strictly increasing".into());
        }
        for &tau in &taus {
            if !(tau >= 0.5) {
                return bad(format!("tau = {tau} is below 0.5"));
            }
            if tau * h > 0.5 {
                return bad(format!("tau*h = {} exceeds 0.5 for tau = {tau}", tau * h));
            }
        }
        let eta = self.scene.source.radius;
        if 2.0 * eta / h < 4.0 {
            return bad(format!("source ball resolved by {:.2} cells across its diameter, need 4", 2.0 * eta / h));
        }
        let constant = self.constant()?;
        let t_final = match self.t_final {
            FinalTime::Auto => match self.m {
                Some(m) if m > 0.0 => 2.0 * constant * m,
                _ => return bad("T = \"auto\" needs a positive a-priori bound M".into()),
            },
            FinalTime::Value(t) if t > 0.0 => t,
            FinalTime::Value(t) => return bad(format!("T must be positive, got {t}")),
        };
        if !(self.grid.sponge_width >= 0.0 && self.grid.sponge_strength >= 0.0) {
            return bad("sponge width and strength must be non-negative".into());
        }
        let sponge = (self.grid.sponge_width / h).round() as usize;
        let need = CLEARANCE_DECAY_LENGTHS / taus[0];
        let anchor = self.scene.source.center;
        let grid = match &self.grid.extents {
            Some(b) => boxed_grid(b, h, sponge, &anchor),
            None => {
                let c = self.grid.clearance.unwrap_or(need);
                Grid3::fitted(&self.scene, h, sponge, c, &anchor)
            }
        }
        .map_err(|e| CliError::Validation(e.to_string()))?;
        let clearance = grid.clearance(&self.scene);
        if clearance < need - 0.5 * h {
            return bad(format!("box clearance {clearance:.4} is below 4/tau_min = {need:.4}"));
        }
        grid.check_clearance(&self.scene).map_err(|e| CliError::Validation(e.to_string()))?;
        let sigma_max = if sponge == 0 { 0.0 } else { self.grid.sponge_strength / (sponge as f64 * h) };
        let cone_condition = match (self.alpha, self.scene.d0_bodies.as_slice()) {
            (Some(alpha), [d0]) if self.scene.has_d() => Some(d_in_cone(alpha, d0, &self.scene)?),
            _ => None,
        };
        Ok(Plan { grid, t_final, taus, constant, sigma_max, cone_condition })
    }
}

fn boxed_grid(b: &BoxSpec, h: f64, sponge: usize, anchor: &Point3) -> enclosure_core::Result<Grid3> {
    let mut origin = Point3::zeros();
    let mut dims = [0usize; 3];
    for k in 0..3 {
        if !(b.upper[k] > b.lower[k]) {
            return Err(enclosure_core::Error::Config("box upper corner must exceed the lower".into()));
        }
        let below = ((anchor[k] - b.lower[k]) / h - 0.5).ceil().max(0.0);
        origin[k] = anchor[k] - (below + 0.5) * h;
        dims[k] = ((b.upper[k] - origin[k]) / h).ceil() as usize;
    }
    Grid3::new(origin, h, dims, sponge)
}

/// Sampled check that every D point lies in V_α(B; D₀).
fn d_in_cone(alpha: f64, d0: &enclosure_core::geometry::ConvexBodySpec, scene: &SceneSpec) -> Result<bool, CliError> {
    for d in &scene.d_bodies {
        let (lo, hi) = d.aabb();
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo).norm();
        let cover = BallSpec::new(c, r).map_err(|e| CliError::Validation(e.to_string()))?;
        for x in ball_samples(&cover, 4 * CONE_SAMPLES).into_iter().filter(|x| d.contains(x)) {
            if !cone_contains(alpha, d0, &scene.source, &x, CONE_SAMPLES).map_err(|e| CliError::Validation(e.to_string()))? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Lower/upper corners of all bodies and B.
pub fn bounds(scene: &SceneSpec) -> (Point3, Point3) {
    scene_bounds(scene)
}
