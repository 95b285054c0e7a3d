mod common;

use std::collections::BTreeSet;

use ampsizer::kb::{builtin_names, CacheKey, KbError};
use ampsizer::{builtin, catalog, solve_targets, DesignSpec, ReasoningCache, ReasoningConfig, TopologyDescriptor};

fn spec(cl: f64, gbw: f64) -> DesignSpec {
    DesignSpec::new(cl, gbw, 60.0, 100.0).unwrap()
}

#[test]
fn ngcc_has_three_stages_and_seven_design_variables() {
    let d = builtin("NGCC").unwrap();
    assert_eq!(d.num_stages(), 3);
    let vars: BTreeSet<&str> = d.design_variables().into_iter().collect();
    let want: BTreeSet<&str> = ["gm1", "gm2", "gm3", "gmf1", "gmf2", "Cm1", "Cm2"].into_iter().collect();
    assert_eq!(vars, want);
}

#[test]
fn undeclared_symbol_is_named() {
    let text = common::SINGLE_POLE.replace(
        r#"terms = [{ k = 1.0, m = ["gm1", "ro1"] }]"#,
        r#"terms = [{ k = 1.0, m = ["gmx", "ro1"] }]"#,
    );
    let err = TopologyDescriptor::from_toml_str(&text).unwrap_err();
    assert!(matches!(err, KbError::Validation { .. }), "{err}");
    assert_eq!(err.subject(), Some("gmx"));
}

#[test]
fn variable_in_unknown_stage_is_rejected() {
    let text = common::SINGLE_POLE.replacen(r#"stage = "stage1""#, r#"stage = "stage9""#, 1);
    let err = TopologyDescriptor::from_toml_str(&text).unwrap_err();
    assert_eq!(err.subject(), Some("gm1"));
}

#[test]
fn malformed_file_is_a_parse_error() {
    let err = TopologyDescriptor::from_toml_str("name = [unterminated").unwrap_err();
    assert!(matches!(err, KbError::Parse { .. }), "{err}");
}

#[test]
fn save_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for d in catalog() {
        let path = dir.path().join(format!("{}.toml", d.name()));
        d.save(&path).unwrap();
        let back = TopologyDescriptor::load(&path).unwrap();
        assert_eq!(back, d, "{}", d.name());
    }
}

#[test]
fn catalog_lists_the_seven_builtins() {
    let all = catalog();
    assert_eq!(all.len(), 7);
    let mut names: Vec<&str> = all.iter().map(|d| d.name()).collect();
    names.sort_unstable();
    assert_eq!(names, ["AZC", "DFCFC", "IAC", "NGCC", "NMCNR", "SMC", "TCFC"]);
    assert_eq!(builtin_names().len(), 7);
}

#[test]
fn builtin_lookup_is_case_insensitive_and_lists_catalog_on_miss() {
    assert_eq!(builtin("ngcc").unwrap().name(), "NGCC");
    let err = builtin("XYZ").unwrap_err();
    let text = err.to_string();
    assert!(text.contains("XYZ") && text.contains("NMCNR"), "{text}");
}

#[test]
fn coefficients_are_finite_at_mid_bounds() {
    for d in catalog() {
        let values = d.mid_bounds_values(50e-12);
        for (i, c) in d.numerator().iter().chain(d.denominator()).enumerate() {
            let v = c.eval(&values);
            assert!(v.is_finite(), "{} coefficient {i} = {v}", d.name());
        }
        assert!(d.denominator()[0].eval(&values) != 0.0);
        assert!(d.denominator().last().unwrap().eval(&values) != 0.0);
    }
}

#[test]
fn cache_get_after_put_returns_stored_targets() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ReasoningCache::new(dir.path());
    let cfg = ReasoningConfig::default();
    let s = spec(50e-12, 5e6);
    let d = builtin("SMC").unwrap();
    let t = solve_targets(&s, &d, &cfg).unwrap();
    let key = CacheKey::new("SMC", &s, &cfg);
    assert_eq!(cache.get(&key).unwrap(), None);
    cache.put(&key, &t).unwrap();
    assert_eq!(cache.get(&key).unwrap(), Some(t));
    assert_eq!(cache.entries().unwrap().len(), 1);
    assert_eq!(cache.clear().unwrap(), 1);
    assert_eq!(cache.get(&key).unwrap(), None);
}

#[test]
fn key_ignores_differences_below_four_significant_figures() {
    let cfg = ReasoningConfig::default();
    let a = CacheKey::new("NGCC", &spec(50e-12, 5e6), &cfg);
    let b = CacheKey::new("ngcc", &spec(50.0001e-12, 5.00001e6), &cfg);
    assert_eq!(a, b);
    assert_eq!(a.digest(), b.digest());
    let c = CacheKey::new("NGCC", &spec(50e-12, 5.01e6), &cfg);
    assert_ne!(a, c);
}

#[test]
fn key_changes_with_solver_settings() {
    let s = spec(50e-12, 5e6);
    let a = CacheKey::new("SMC", &s, &ReasoningConfig::default());
    let cfg = ReasoningConfig {
        separation_factor: 2.5,
        ..ReasoningConfig::default()
    };
    assert_ne!(a, CacheKey::new("SMC", &s, &cfg));
}

#[test]
fn corrupt_entry_reads_as_a_miss() {
    let dir = tempfile::tempdir().unwrap();
    let cache = ReasoningCache::new(dir.path());
    let key = CacheKey::new("SMC", &spec(50e-12, 5e6), &ReasoningConfig::default());
    std::fs::write(dir.path().join(format!("{}.json", key.digest())), "{ not json").unwrap();
    assert_eq!(cache.get(&key).unwrap(), None);
}

#[test]
fn unwritable_cache_directory_is_a_storage_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let cache = ReasoningCache::new(file.join("cache"));
    let cfg = ReasoningConfig::default();
    let s = spec(50e-12, 5e6);
    let t = solve_targets(&s, &builtin("SMC").unwrap(), &cfg).unwrap();
    let err = cache.put(&CacheKey::new("SMC", &s, &cfg), &t).unwrap_err();
    assert!(matches!(err, KbError::Storage { .. }), "{err}");
}

#[test]
fn toy_descriptor_loads() {
    let d = common::single_pole();
    assert_eq!(d.design_variables(), ["gm1"]);
}
