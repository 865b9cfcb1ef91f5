use std::path::PathBuf;

use proptest::prelude::*;

use enclosure_cli::config::{ExperimentConfig, FinalTime, TauSpec};
use enclosure_cli::presets::{preset, PRESET_NAMES};
use enclosure_cli::run::config_digest;

fn preset_config() -> impl Strategy<Value = ExperimentConfig> {
    prop::sample::select(PRESET_NAMES.to_vec()).prop_map(|n| preset(n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_json_round_trips(
        mut cfg in preset_config(),
        seed in any::<u64>(),
        t in prop::option::of(0.5..40.0f64),
        taus in prop::collection::vec(0.5..8.0f64, 1..12),
        records in any::<bool>(),
    ) {
        cfg.seed = seed;
        cfg.write_records = records;
        if let Some(t) = t {
            cfg.t_final = FinalTime::Value(t);
        }
        cfg.taus = TauSpec::List(taus);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), cfg.to_json());
    }

    #[test]
    fn digest_ignores_the_output_path(cfg in preset_config(), a in "[a-z]{1,8}", b in "[a-z]{1,8}") {
        let mut x = cfg.clone();
        let mut y = cfg;
        x.outputs = PathBuf::from(a);
        y.outputs = PathBuf::from(b);
        prop_assert_eq!(config_digest(&x), config_digest(&y));
        y.seed = y.seed.wrapping_add(1);
        prop_assert_ne!(config_digest(&x), config_digest(&y));
    }

    #[test]
    fn tau_range_hits_both_ends(start in 0.5..3.0f64, step in 0.05..1.0f64, n in 0usize..40) {
        let stop = start + step * n as f64;
        let v = TauSpec::Range { start, stop, step }.values().unwrap();
        prop_assert_eq!(v.len(), n + 1);
        prop_assert_eq!(v[0], start);
        prop_assert!((v[n] - stop).abs() < 1e-9);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn tau_range_rejects_ragged_stop(start in 0.5..3.0f64, step in 0.1..1.0f64, n in 1usize..20, frac in 0.1..0.9f64) {
        let stop = start + step * (n as f64 + frac);
        let spec = TauSpec::Range { start, stop, step };
        prop_assert!(spec.values().is_err());
    }

    #[test]
    fn plans_reject_coarse_taus(mut cfg in preset_config(), tau in 8.01..20.0f64) {
        cfg.taus = TauSpec::List(vec![1.0, 1.5, 2.0, tau]);
        let e = cfg.plan().unwrap_err();
        prop_assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn plans_reject_unsorted_or_short_sweeps(mut cfg in preset_config(), taus in prop::collection::vec(0.5..3.0f64, 0..8)) {
        let sorted = taus.len() >= 4 && taus.windows(2).all(|w| w[1] > w[0]);
        prop_assume!(!sorted);
        cfg.taus = TauSpec::List(taus);
        prop_assert_eq!(cfg.plan().unwrap_err().exit_code(), 2);
    }
}

#[test]
fn every_preset_plans() {
    for name in PRESET_NAMES {
        let cfg = preset(name).unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.taus.len(), 9, "{name}");
        assert!(plan.grid.len() < 8_000_000, "{name}: {:?}", plan.grid.dims);
    }
    assert!(preset("no-such-scene").is_err());
}

#[test]
fn ellipsoid_preset_satisfies_the_cone_condition() {
    let plan = preset("ellipsoid-cone").unwrap().plan().unwrap();
    assert_eq!(plan.cone_condition, Some(true));
    assert!((plan.constant - std::f64::consts::SQRT_2).abs() < 1e-15);
}

#[test]
fn unknown_fields_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&preset("empty").unwrap().to_json()).unwrap();
    v["tua"] = serde_json::json!([1.0]);
    assert_eq!(ExperimentConfig::from_json(&v.to_string()).unwrap_err().exit_code(), 2);
}
