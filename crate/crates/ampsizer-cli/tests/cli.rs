use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

const ONE_POLE: &str = r#"
format_version = 1
name = "ONEPOLE"
num_stages = 1

[[stages]]
id = "stage1"

[[variables]]
symbol = "gm1"
kind = "transconductance"
role = "design"
bounds = [8e-06, 0.034]
stage = "stage1"

[[variables]]
symbol = "ro1"
kind = "resistance"
role = "output_resistance"
bounds = [10000.0, 100000000.0]
stage = "global"

[[devices]]
name = "M1"
polarity = "n"
gm = "gm1"
ro = "ro1"

[[numerator]]
power = 0
terms = [{ k = 1.0, m = ["gm1", "ro1"] }]

[[denominator]]
power = 0
terms = [{ k = 1.0, m = [] }]

[[denominator]]
power = 1
terms = [{ k = 1.0, m = ["C_L", "ro1"] }]

[[design_equations]]
relation = "eq"
terms = [
  { k = 1.0, m = ["gm1"] },
  { k = -6.283185307179586, m = ["C_L", "GBW"] },
]
"#;

fn ampsizer(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ampsizer"))
        .current_dir(dir)
        .env("AMPSIZER_CACHE_DIR", dir.join("cache"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn strip_wall_time(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("wall_time_s");
            m.values_mut().for_each(strip_wall_time);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

#[test]
fn design_nmcnr_reference_spec() {
    let dir = tempfile::tempdir().unwrap();
    let o = ampsizer(
        dir.path(),
        &["design", "NMCNR", "--gbw", "5e6", "--cl", "50e-12", "--pm", "60", "--gain", "120"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = read_json(&dir.path().join("design.json"));
    assert_eq!(d["success"], true);
    assert!(d["metrics"]["gbw_hz"].as_f64().unwrap() >= 5e6);
    assert!(stdout(&o).contains("success      true"));
}

#[test]
fn global_refinement_lowers_ngcc_current() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["design", "NGCC", "--gbw", "1e6", "--cl", "50e-12", "--pm", "60", "--gain", "100"];
    let mut without = base.to_vec();
    without.extend(["--no-globalopt", "-o", "plain.json"]);
    let mut with = base.to_vec();
    with.extend(["-o", "refined.json"]);
    assert_eq!(ampsizer(dir.path(), &without).status.code(), Some(0));
    assert_eq!(ampsizer(dir.path(), &with).status.code(), Some(0));
    let plain = read_json(&dir.path().join("plain.json"))["i_dd"].as_f64().unwrap();
    let refined = read_json(&dir.path().join("refined.json"))["i_dd"].as_f64().unwrap();
    assert!(refined <= plain, "{refined} > {plain}");
}

#[test]
fn identical_invocations_write_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec!["--seed", "5", "design", "SMC", "--gbw", "3e6", "--cl", "20e-12", "--gain", "70", "-o", out]
    };
    assert_eq!(ampsizer(dir.path(), &args("a.json")).status.code(), Some(0));
    assert_eq!(ampsizer(dir.path(), &args("b.json")).status.code(), Some(0));
    let mut a = read_json(&dir.path().join("a.json"));
    let mut b = read_json(&dir.path().join("b.json"));
    strip_wall_time(&mut a);
    strip_wall_time(&mut b);
    // the second run reads its targets from the cache
    a["history"]["targets_from_cache"] = serde_json::Value::Null;
    b["history"]["targets_from_cache"] = serde_json::Value::Null;
    assert_eq!(a, b);
}

#[test]
fn unknown_topology_lists_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = ampsizer(dir.path(), &["design", "FOO", "--gbw", "1e6", "--cl", "1e-11"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["AZC", "DFCFC", "IAC", "NGCC", "NMCNR", "SMC", "TCFC"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ampsizer(dir.path(), &["design", "SMC", "--cl", "1e-11"]).status.code(), Some(2));
    let bad_pm = ampsizer(dir.path(), &["design", "SMC", "--gbw", "1e6", "--cl", "1e-11", "--pm", "95"]);
    assert_eq!(bad_pm.status.code(), Some(2));
    let bad_opt = ampsizer(
        dir.path(),
        &["design", "SMC", "--gbw", "1e6", "--cl", "1e-11", "--optimizer", "pso"],
    );
    assert_eq!(bad_opt.status.code(), Some(2));
    assert_eq!(ampsizer(dir.path(), &["bench", "missing.toml"]).status.code(), Some(2));
}

#[test]
fn infeasible_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = ampsizer(dir.path(), &["design", "SMC", "--gbw", "500e6", "--cl", "1e-9", "--gain", "70"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn analyze_single_pole() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("onepole.toml"), ONE_POLE).unwrap();
    // 1000 / (1 + s / (2 pi 100 Hz))
    let ro = 1.0e6;
    let cl = 1.0 / (2.0 * std::f64::consts::PI * 100.0 * ro);
    std::fs::write(
        dir.path().join("values.toml"),
        format!("gm1 = {}\nro1 = {ro}\nC_L = {cl}\n", 1000.0 / ro),
    )
    .unwrap();
    let o = ampsizer(dir.path(), &["analyze", "onepole.toml", "values.toml", "--bode", "bode.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((m["pm_deg"].as_f64().unwrap() - 90.06).abs() < 0.05, "{m}");
    assert!((m["gbw_hz"].as_f64().unwrap() / 1e5 - 1.0).abs() < 1e-3);
    assert!((m["dc_gain_db"].as_f64().unwrap() - 60.0).abs() < 1e-9);

    let csv = std::fs::read_to_string(dir.path().join("bode.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "freq_hz,mag_db,phase_deg");
    assert_eq!(lines.len() - 1, 10 * 50 + 1);
    let freqs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(freqs.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn analyze_reports_missing_symbols() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("onepole.toml"), ONE_POLE).unwrap();
    std::fs::write(dir.path().join("values.json"), r#"{"gm1": 1e-3, "C_L": 1e-11}"#).unwrap();
    let o = ampsizer(dir.path(), &["analyze", "onepole.toml", "values.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("binding error") && err.contains("ro1"), "{err}");
}

#[test]
fn topologies_lists_seven() {
    let dir = tempfile::tempdir().unwrap();
    let o = ampsizer(dir.path(), &["topologies"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1 + 7);
    let one = ampsizer(dir.path(), &["topologies", "ngcc"]);
    assert!(stdout(&one).contains("name = \"NGCC\""));
}

#[test]
fn cache_commands_follow_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = ampsizer(dir.path(), &["cache", "path"]);
    assert_eq!(stdout(&path).trim(), dir.path().join("cache").display().to_string());
    let d = ampsizer(dir.path(), &["design", "SMC", "--gbw", "2e6", "--cl", "20e-12", "--gain", "70"]);
    assert_eq!(d.status.code(), Some(0));
    let list = ampsizer(dir.path(), &["cache", "list"]);
    assert_eq!(stdout(&list).lines().count(), 1, "{}", stdout(&list));
    assert!(stdout(&list).starts_with("SMC"));
    let clear = ampsizer(dir.path(), &["cache", "clear"]);
    assert_eq!(stdout(&clear).trim(), "removed 1 entries");
    let other = dir.path().join("elsewhere");
    let flag = ampsizer(dir.path(), &["--cache-dir", other.to_str().unwrap(), "cache", "path"]);
    assert_eq!(stdout(&flag).trim(), other.display().to_string());
}

#[test]
fn smoke_bench_is_quick_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/bench-smoke.toml");
    let start = Instant::now();
    let o = ampsizer(dir.path(), &["bench", cfg.to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("smoke-report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(dir.path().join("smoke-report.md").is_file());
}

#[test]
fn check_fails_on_a_sabotaged_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sabotage.toml"),
        r#"
topologies = ["SMC"]
n_runs = 3
budget = 30

[gain_min]
SMC = 400.0

[pipeline]
global_budget = 0
"#,
    )
    .unwrap();
    let o = ampsizer(dir.path(), &["bench", "sabotage.toml", "--check"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
}
