//! JSON-in, JSON-out bindings behind the static demo page in `www/`.
//!
//! Every exported function has a plain Rust counterpart returning
//! `Result<String, String>` so the logic is testable off the browser.

use std::collections::BTreeMap;

use ampsizer::analysis::{bode_points, BodePoint};
use ampsizer::reasoning::PredictedMetrics;
use ampsizer::{
    ac_metrics, assemble_tf, builtin, catalog, design, solve_targets, AcMetrics, DesignSpec, PipelineConfig,
    ProcessProfile, ReasoningConfig, SmallSignalParams, TopologyDescriptor,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BODE_START_HZ: f64 = 1.0;
const BODE_STOP_HZ: f64 = 1e10;

#[derive(Serialize)]
struct TopologyInfo<'a> {
    name: &'a str,
    title: &'a str,
    stages: u32,
    design_variables: Vec<&'a str>,
}

#[derive(Serialize)]
struct TargetsView {
    targets: BTreeMap<String, f64>,
    predicted: PredictedMetrics,
    separation_factor: f64,
    bode: Vec<BodePoint>,
}

#[derive(Serialize)]
struct DesignView {
    success: bool,
    i_dd: f64,
    evaluations: usize,
    first_feasible_evaluation: Option<usize>,
    metrics: Option<AcMetrics>,
    values: BTreeMap<String, f64>,
    bode: Vec<BodePoint>,
}

#[derive(Serialize)]
struct AnalysisView {
    metrics: AcMetrics,
    bode: Vec<BodePoint>,
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("views serialize")
}

fn spec(gbw_hz: f64, cl_f: f64, pm_deg: f64, gain_db: f64) -> Result<DesignSpec, String> {
    DesignSpec::new(cl_f, gbw_hz, pm_deg, gain_db).map_err(|e| e.to_string())
}

fn descriptor(name: &str) -> Result<TopologyDescriptor, String> {
    builtin(name).map_err(|e| e.to_string())
}

fn bode_of(desc: &TopologyDescriptor, ssp: &SmallSignalParams, cl: f64) -> Result<Vec<BodePoint>, String> {
    let tf = assemble_tf(desc, ssp, cl).map_err(|e| e.to_string())?;
    bode_points(&tf, BODE_START_HZ, BODE_STOP_HZ).map_err(|e| e.to_string())
}

/// Built-in topologies with their design variables.
pub fn topology_list() -> String {
    let all = catalog();
    let info: Vec<TopologyInfo<'_>> = all
        .iter()
        .map(|d| TopologyInfo {
            name: d.name(),
            title: d.title(),
            stages: d.num_stages(),
            design_variables: d.design_variables(),
        })
        .collect();
    to_json(&info)
}

/// Pole-placement targets and the Bode response they predict.
pub fn derive_targets(topology: &str, gbw_hz: f64, cl_f: f64, pm_deg: f64, gain_db: f64) -> Result<String, String> {
    let desc = descriptor(topology)?;
    let spec = spec(gbw_hz, cl_f, pm_deg, gain_db)?;
    let t = solve_targets(&spec, &desc, &ReasoningConfig::default()).map_err(|e| e.to_string())?;
    let mut values = BTreeMap::new();
    for v in desc.variables() {
        let x = v
            .value
            .or_else(|| t.target(&v.symbol).map(|t| t.value))
            .or_else(|| t.assumed_output_resistance.get(&v.symbol).copied());
        if let Some(x) = x {
            values.insert(v.symbol.clone(), x);
        }
    }
    let bode = bode_of(&desc, &SmallSignalParams { values, i_dd: 0.0 }, cl_f)?;
    Ok(to_json(&TargetsView {
        targets: t.targets.iter().map(|(k, v)| (k.clone(), v.value)).collect(),
        predicted: t.predicted,
        separation_factor: t.separation_factor,
        bode,
    }))
}

/// Full sizing run with the default pipeline settings.
pub fn size(
    topology: &str,
    gbw_hz: f64,
    cl_f: f64,
    pm_deg: f64,
    gain_db: f64,
    seed: u64,
    refine: bool,
) -> Result<String, String> {
    let desc = descriptor(topology)?;
    let spec = spec(gbw_hz, cl_f, pm_deg, gain_db)?;
    let cfg = PipelineConfig {
        seed,
        use_global_optimizer: refine,
        ..PipelineConfig::default()
    };
    let d = design(&spec, &desc, &ProcessProfile::default(), &cfg, None).map_err(|e| e.to_string())?;
    let bode = bode_of(&desc, &d.ssp, cl_f)?;
    Ok(to_json(&DesignView {
        success: d.success,
        i_dd: d.i_dd,
        evaluations: d.history.total_evaluations,
        first_feasible_evaluation: d.history.first_feasible_evaluation,
        metrics: d.metrics,
        values: d.ssp.values,
        bode,
    }))
}

/// Metrics for explicit small-signal values given as a JSON object that
/// includes `C_L`.
pub fn analyze_values(topology: &str, values_json: &str) -> Result<String, String> {
    let desc = descriptor(topology)?;
    let mut values: BTreeMap<String, f64> = serde_json::from_str(values_json).map_err(|e| e.to_string())?;
    let cl = values.remove("C_L").ok_or("no value for C_L")?;
    let ssp = SmallSignalParams { values, i_dd: 0.0 };
    let tf = assemble_tf(&desc, &ssp, cl).map_err(|e| e.to_string())?;
    let metrics = ac_metrics(&tf).map_err(|e| e.to_string())?;
    let bode = bode_points(&tf, BODE_START_HZ, BODE_STOP_HZ).map_err(|e| e.to_string())?;
    Ok(to_json(&AnalysisView { metrics, bode }))
}

#[wasm_bindgen]
pub fn topologies() -> String {
    topology_list()
}

#[wasm_bindgen]
pub fn targets(topology: &str, gbw_hz: f64, cl_f: f64, pm_deg: f64, gain_db: f64) -> Result<String, JsValue> {
    derive_targets(topology, gbw_hz, cl_f, pm_deg, gain_db).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sizeAmplifier)]
pub fn size_amplifier(
    topology: &str,
    gbw_hz: f64,
    cl_f: f64,
    pm_deg: f64,
    gain_db: f64,
    seed: u32,
    refine: bool,
) -> Result<String, JsValue> {
    size(topology, gbw_hz, cl_f, pm_deg, gain_db, u64::from(seed), refine).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn analyze(topology: &str, values_json: &str) -> Result<String, JsValue> {
    analyze_values(topology, values_json).map_err(|e| JsValue::from_str(&e))
}
