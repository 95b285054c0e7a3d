use ampsizer_web::{analyze_values, derive_targets, size, topology_list};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn lists_the_catalog() {
    let v = parse(&topology_list());
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"NGCC"));
}

#[test]
fn targets_carry_a_bode_curve() {
    let v = parse(&derive_targets("NGCC", 10e6, 10e-12, 60.0, 100.0).unwrap());
    assert!(v["predicted"]["gbw_hz"].as_f64().unwrap() >= 10e6);
    assert!(v["targets"]["gm1"].as_f64().unwrap() > 0.0);
    assert_eq!(v["bode"].as_array().unwrap().len(), 10 * 50 + 1);
}

#[test]
fn sizing_reports_metrics() {
    let v = parse(&size("SMC", 5e6, 20e-12, 60.0, 70.0, 1, true).unwrap());
    assert_eq!(v["success"], true);
    assert!(v["metrics"]["pm_deg"].as_f64().unwrap() >= 60.0);
    assert!(v["evaluations"].as_u64().unwrap() > 0);
}

#[test]
fn analysis_of_explicit_values() {
    let s = derive_targets("SMC", 5e6, 20e-12, 60.0, 70.0).unwrap();
    let t = parse(&s);
    let mut values = t["targets"].as_object().unwrap().clone();
    for (k, v) in [("Cp1", 5e-13), ("ro1", 1e6), ("ro2", 1e5), ("C_L", 20e-12)] {
        values.insert(k.into(), v.into());
    }
    let v = parse(&analyze_values("SMC", &Value::Object(values).to_string()).unwrap());
    assert!(v["metrics"]["gbw_hz"].as_f64().unwrap() > 1e6);
}

#[test]
fn errors_are_messages() {
    assert!(derive_targets("NOPE", 1e6, 1e-11, 60.0, 80.0).unwrap_err().contains("NOPE"));
    assert!(size("SMC", 1e6, 1e-11, 120.0, 80.0, 0, false).unwrap_err().contains("pm_min"));
    assert!(analyze_values("SMC", "{\"gm1\": 1e-3}").unwrap_err().contains("C_L"));
}
