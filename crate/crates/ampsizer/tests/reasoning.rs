mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use ampsizer::kb::GLOBAL_STAGE;
use ampsizer::reasoning::{BoundSide, InfeasibleReason, ReasoningError};
use ampsizer::{builtin, catalog, decompose, solve_targets, DesignSpec, ReasoningConfig};
use ampsizer::reasoning::solve_targets_with_resistances;

fn spec(cl: f64, gbw: f64, gain: f64) -> DesignSpec {
    DesignSpec::new(cl, gbw, 60.0, gain).unwrap()
}

#[test]
fn single_pole_target_is_closed_form() {
    let cfg = ReasoningConfig::default();
    let d = common::single_pole();
    for (cl, gbw) in [(10e-12, 1e6), (50e-12, 5e6), (100e-12, 10e6)] {
        let t = solve_targets(&spec(cl, gbw, 40.0), &d, &cfg).unwrap();
        let want = 2.0 * PI * gbw * cfg.gbw_margin * cl;
        let got = t.target("gm1").unwrap().value;
        assert!((got / want - 1.0).abs() < 1e-9, "{got} vs {want}");
        assert_eq!(t.retries, 0);
        assert!(t.predicted.pm_deg > 89.0);
    }
}

#[test]
fn gm_beyond_its_bound_is_infeasible_and_named() {
    let err = solve_targets(&spec(100e-12, 100e6, 40.0), &common::single_pole(), &ReasoningConfig::default())
        .unwrap_err();
    match err {
        ReasoningError::Infeasible(InfeasibleReason::Bound { symbol, side, .. }) => {
            assert_eq!(symbol, "gm1");
            assert_eq!(side, BoundSide::Upper);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn invalid_spec_is_rejected() {
    assert!(matches!(
        DesignSpec::new(10e-12, 1e6, 95.0, 60.0),
        Err(ReasoningError::InvalidSpec(_))
    ));
    assert!(DesignSpec::new(-1.0, 1e6, 60.0, 60.0).is_err());
}

#[test]
fn ngcc_ten_megahertz_ten_picofarad() {
    let t = solve_targets(&spec(10e-12, 10e6, 100.0), &builtin("NGCC").unwrap(), &ReasoningConfig::default())
        .unwrap();
    let gbw = t.predicted.gbw_hz;
    assert!((10e6..=12e6).contains(&gbw), "GBW {gbw}");
    assert!(t.predicted.pm_deg >= 58.0, "PM {}", t.predicted.pm_deg);
    assert!(t.predicted.stable);
}

#[test]
fn predicted_gbw_stays_near_the_design_frequency() {
    let cfg = ReasoningConfig::default();
    for name in ["SMC", "NGCC", "NMCNR"] {
        let d = builtin(name).unwrap();
        for gbw in [1e6, 3e6, 8e6] {
            let s = spec(30e-12, gbw, 100.0);
            let t = solve_targets(&s, &d, &cfg).unwrap();
            let hi = gbw * cfg.gbw_margin * (1.0 + cfg.tolerance);
            assert!(
                t.predicted.gbw_hz >= gbw && t.predicted.gbw_hz <= hi,
                "{name} at {gbw}: {}",
                t.predicted.gbw_hz
            );
        }
    }
}

#[test]
fn solve_is_deterministic() {
    let cfg = ReasoningConfig::default();
    for d in catalog() {
        let s = if d.name() == "AZC" {
            spec(10e-9, 1e6, 100.0)
        } else {
            spec(50e-12, 5e6, 100.0)
        };
        let a = solve_targets(&s, &d, &cfg).unwrap();
        let b = solve_targets(&s, &d, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn first_stage_gm_grows_with_gbw() {
    let cfg = ReasoningConfig::default();
    for name in ["SMC", "NGCC"] {
        let d = builtin(name).unwrap();
        let mut last = 0.0;
        for gbw in [1e6, 2e6, 4e6, 6e6, 8e6, 10e6] {
            let gm1 = solve_targets(&spec(20e-12, gbw, 100.0), &d, &cfg).unwrap().target("gm1").unwrap().value;
            assert!(gm1 >= last, "{name}: gm1 fell to {gm1} at {gbw}");
            last = gm1;
        }
    }
}

#[test]
fn measured_resistances_replace_the_estimate() {
    let cfg = ReasoningConfig::default();
    let d = builtin("NGCC").unwrap();
    let s = spec(10e-12, 10e6, 100.0);
    let first = solve_targets(&s, &d, &cfg).unwrap();
    let same = solve_targets_with_resistances(&s, &d, &cfg, &first.assumed_output_resistance).unwrap();
    for (k, t) in &first.targets {
        assert!(t.accepts(same.targets[k].value), "{k}");
    }

    let measured: BTreeMap<String, f64> = first
        .assumed_output_resistance
        .iter()
        .map(|(k, v)| (k.clone(), v * 20.0))
        .collect();
    let next = solve_targets_with_resistances(&s, &d, &cfg, &measured).unwrap();
    for (k, v) in &measured {
        assert_eq!(next.assumed_output_resistance[k], *v, "{k}");
    }
    assert!(next.predicted.gbw_hz >= s.gbw_min && next.predicted.pm_deg >= s.pm_min - 2.0);
}

#[test]
fn ngcc_splits_into_four_subproblems() {
    let d = builtin("NGCC").unwrap();
    let t = solve_targets(&spec(50e-12, 5e6, 100.0), &d, &ReasoningConfig::default()).unwrap();
    let subs = decompose(&t, &d);
    let stages: Vec<&str> = subs.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(stages, ["stage1", "stage2", "stage3", "comp"]);
}

#[test]
fn smc_splits_into_two_subproblems() {
    let d = builtin("SMC").unwrap();
    let t = solve_targets(&spec(50e-12, 5e6, 80.0), &d, &ReasoningConfig::default()).unwrap();
    assert_eq!(decompose(&t, &d).len(), 2);
}

#[test]
fn subproblems_partition_the_staged_variables() {
    let cfg = ReasoningConfig::default();
    for d in catalog() {
        let s = if d.name() == "AZC" {
            spec(10e-9, 1e6, 100.0)
        } else {
            spec(50e-12, 5e6, 100.0)
        };
        let t = solve_targets(&s, &d, &cfg).unwrap();
        let subs = decompose(&t, &d);
        let mut owned = Vec::new();
        for sub in &subs {
            owned.extend(sub.owned.iter().map(|o| o.symbol.clone()));
        }
        let unique: BTreeSet<String> = owned.iter().cloned().collect();
        assert_eq!(unique.len(), owned.len(), "{} owns a variable twice", d.name());
        let staged: BTreeSet<String> = d
            .design_variables()
            .into_iter()
            .filter(|v| d.variable(v).unwrap().stage != GLOBAL_STAGE)
            .map(str::to_string)
            .collect();
        assert_eq!(unique, staged, "{}", d.name());
    }
}
