//! Named scenes. The ball presets share D₀ (unit ball at the origin), the
//! source ball B of radius 0.4 at (−2.2, 0, 0) and the default sweep
//! τ = 1.0, 1.25, …, 3.0 at h = 0.0625.

use std::path::PathBuf;

use enclosure_core::geometry::{BallSpec, ConvexBodySpec, Point3, SceneSpec};
use nalgebra::Matrix3;

use crate::config::{ExperimentConfig, FinalTime, GridConfig, TauSpec};
use crate::CliError;

pub const PRESET_NAMES: [&str; 5] = ["ball-behind-ball", "empty", "ranging-near", "ranging-far", "ellipsoid-cone"];

fn ball(x: f64, y: f64, z: f64, r: f64) -> ConvexBodySpec {
    ConvexBodySpec::ball(Point3::new(x, y, z), r).expect("preset ball")
}

fn source() -> BallSpec {
    BallSpec::new(Point3::new(-2.2, 0.0, 0.0), 0.4).expect("preset source")
}

fn base(name: &str, d_bodies: Vec<ConvexBodySpec>, m: f64) -> ExperimentConfig {
    ExperimentConfig {
        scene: SceneSpec { d0_bodies: vec![ball(0.0, 0.0, 0.0, 1.0)], d_bodies, source: source(), g_amplitude: 1.0 },
        grid: GridConfig {
            h: 0.0625,
            clearance: None,
            extents: None,
            sponge_width: enclosure_core::wavesim::DEFAULT_SPONGE_WIDTH,
            sponge_strength: enclosure_core::wavesim::DEFAULT_SPONGE_STRENGTH,
        },
        t_final: FinalTime::Auto,
        m: Some(m),
        taus: TauSpec::Range { start: 1.0, stop: 3.0, step: 0.25 },
        alpha: None,
        outputs: PathBuf::from("out").join(name),
        seed: 42,
        write_records: false,
        dump_fields: false,
    }
}

/// The configuration behind a preset name.
pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let cfg = match name {
        // dist(D, B) = 3.5.
        "ball-behind-ball" => base(name, vec![ball(2.2, 0.0, 0.0, 0.5)], 4.0),
        "empty" => base(name, vec![], 4.0),
        // dist(D, B) = 3.4 − 0.9 = 2.5, in view of B past the top of D₀.
        "ranging-near" => base(name, vec![ball(0.8, 1.6, 0.0, 0.5)], 4.0),
        // dist(D, B) = 5.4 − 0.9 = 4.5.
        "ranging-far" => base(name, vec![ball(3.2, 0.0, 0.0, 0.5)], 5.0),
        // Convex D₀ with B and D on the same side (ν·ν ≥ 0), constant √2.
        "ellipsoid-cone" => {
            let mut cfg = base(name, vec![ball(2.6, 1.2, 0.0, 0.5)], 2.5);
            cfg.scene.d0_bodies =
                vec![ConvexBodySpec::ellipsoid(Point3::zeros(), [1.5, 1.0, 1.0], Matrix3::identity()).expect("preset ellipsoid")];
            cfg.scene.source = BallSpec::new(Point3::new(0.0, 2.4, 0.0), 0.4).expect("preset source");
            cfg.alpha = Some(0.0);
            cfg
        }
        _ => return Err(CliError::Validation(format!("unknown preset {name:?}; known: {}", PRESET_NAMES.join(", ")))),
    };
    Ok(cfg)
}
