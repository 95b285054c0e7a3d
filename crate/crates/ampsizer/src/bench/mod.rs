//! Randomized comparison of the sizing pipeline with raw optimizers.

mod reference;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::device::ProcessProfile;
use crate::kb::{builtin, KbError, TopologyDescriptor};
use crate::optimizers::{OptimizerKind, OptimizerSettings};
use crate::reasoning::DesignSpec;
use crate::sizing::{design, optimize_only, PipelineConfig, SizedDesign};

pub use reference::{
    default_gain_min, reference_ifom, reference_run, ReferenceCell, ReferenceIfom, REFERENCE_IFOM, REFERENCE_RUNS,
};
pub use report::{emit_report, format_sig3, render, ReportFormat, CSV_HEADER, MARKDOWN_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("cannot read bench config {path}: {source}")]
    ConfigIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] KbError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Small-signal figure of merit in MHz·pF/mA.
pub fn ifom_s(gbw_hz: f64, cl_f: f64, idd_a: f64) -> f64 {
    (gbw_hz / 1e6) * (cl_f / 1e-12) / (idd_a / 1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pipeline,
    Abc,
    Turbo5,
    Turbo1,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pipeline, Method::Abc, Method::Turbo5, Method::Turbo1];

    pub fn label(self) -> &'static str {
        match self {
            Method::Pipeline => "pipeline",
            Method::Abc => "ABC",
            Method::Turbo5 => "TuRBO-5",
            Method::Turbo1 => "TuRBO-1",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }

    pub fn optimizer(self) -> Option<OptimizerKind> {
        match self {
            Method::Pipeline => None,
            Method::Abc => Some(OptimizerKind::Abc),
            Method::Turbo5 => Some(OptimizerKind::Turbo5),
            Method::Turbo1 => Some(OptimizerKind::Turbo1),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Sampling box for one topology's specs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRange {
    /// Minimum unity-gain frequency range (Hz), sampled uniformly.
    pub gbw_hz: [f64; 2],
    /// Load capacitance range (F), sampled log-uniformly.
    pub cl_f: [f64; 2],
}

impl SpecRange {
    pub const DEFAULT: SpecRange = SpecRange {
        gbw_hz: [1e6, 10e6],
        cl_f: [10e-12, 100e-12],
    };

    /// Built-in range per topology: the default box, with the load scaled
    /// where the default is out of reach for the topology.
    pub fn for_topology(topology: &str) -> SpecRange {
        match topology.to_ascii_uppercase().as_str() {
            "NMCNR" => SpecRange {
                gbw_hz: [1e6, 10e6],
                cl_f: [10e-12, 50e-12],
            },
            "DFCFC" | "TCFC" => SpecRange {
                gbw_hz: [1e6, 10e6],
                cl_f: [30e-12, 300e-12],
            },
            "IAC" => SpecRange {
                gbw_hz: [1e6, 10e6],
                cl_f: [50e-12, 500e-12],
            },
            "AZC" => SpecRange {
                gbw_hz: [0.5e6, 2e6],
                cl_f: [5e-9, 15e-9],
            },
            _ => SpecRange::DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, r) in [("gbw_hz", self.gbw_hz), ("cl_f", self.cl_f)] {
            if !(r[0] > 0.0 && r[0] < r[1] && r[1].is_finite()) {
                return Err(format!("{name} must satisfy 0 < lower < upper, got {r:?}"));
            }
        }
        Ok(())
    }
}

/// Output files written by a bench run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub markdown: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// Per-run records as JSON.
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub topologies: Vec<String>,
    pub methods: Vec<Method>,
    pub n_runs: usize,
    pub seed: u64,
    /// Evaluations allowed per run, shared by every phase of the pipeline.
    pub budget: usize,
    pub pm_min: f64,
    /// Per-topology overrides of the sampling box.
    pub ranges: BTreeMap<String, SpecRange>,
    /// Per-topology overrides of the minimum DC gain (dB).
    pub gain_min: BTreeMap<String, f64>,
    /// Stop each run at its first design that meets the spec.
    pub stop_on_success: bool,
    pub pipeline: PipelineConfig,
    pub optimizers: OptimizerSettings,
    pub output: OutputPaths,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            topologies: vec!["SMC".into(), "NGCC".into()],
            methods: Method::ALL.to_vec(),
            n_runs: 30,
            seed: 0,
            budget: 100,
            pm_min: 60.0,
            ranges: BTreeMap::new(),
            gain_min: BTreeMap::new(),
            stop_on_success: true,
            pipeline: PipelineConfig::default(),
            optimizers: OptimizerSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::ConfigIo {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.topologies.is_empty() {
            return bad("no topologies".into());
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.n_runs < 1 {
            return bad("n_runs must be at least 1".into());
        }
        if self.budget < 1 {
            return bad("budget must be at least 1".into());
        }
        if !(self.pm_min > 0.0 && self.pm_min < 90.0) {
            return bad(format!("pm_min must lie in (0, 90), got {}", self.pm_min));
        }
        for (t, r) in &self.ranges {
            r.validate().or_else(|e| bad(format!("ranges.{t}: {e}")))?;
        }
        for (t, g) in &self.gain_min {
            if !(*g > 0.0) {
                return bad(format!("gain_min.{t} must be positive"));
            }
        }
        self.pipeline
            .validate()
            .or_else(|e| bad(format!("pipeline: {e}")))?;
        Ok(())
    }

    pub fn range_for(&self, topology: &str) -> SpecRange {
        self.ranges
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(topology))
            .map(|(_, r)| *r)
            .unwrap_or_else(|| SpecRange::for_topology(topology))
    }

    pub fn gain_min_for(&self, topology: &str) -> f64 {
        self.gain_min
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(topology))
            .map(|(_, g)| *g)
            .or_else(|| default_gain_min(topology))
            .unwrap_or(80.0)
    }
}

/// `n` specs with GBW uniform and C_L log-uniform over `range`.
pub fn sample_specs(rng: &mut impl Rng, range: &SpecRange, pm_min: f64, gain_min: f64, n: usize) -> Vec<DesignSpec> {
    (0..n)
        .map(|_| {
            let gbw = rng.random_range(range.gbw_hz[0]..=range.gbw_hz[1]);
            let (lo, hi) = (range.cl_f[0].ln(), range.cl_f[1].ln());
            let cl = rng.random_range(lo..=hi).exp().clamp(range.cl_f[0], range.cl_f[1]);
            DesignSpec {
                cl,
                gbw_min: gbw,
                pm_min,
                gain_min,
            }
        })
        .collect()
}

/// Outcome of one (topology, spec, seed, method) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub topology: String,
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub spec: DesignSpec,
    pub success: bool,
    /// Evaluations up to and including the first that met the spec.
    pub evaluations_to_success: Option<usize>,
    pub evaluations: usize,
    pub wall_time_s: f64,
    pub i_dd: Option<f64>,
    pub gbw_hz: Option<f64>,
    pub pm_deg: Option<f64>,
    pub ifom: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    /// Evaluations charged to the run: budget when it never succeeded.
    pub fn charged_evaluations(&self, budget: usize) -> usize {
        self.evaluations_to_success.unwrap_or(budget)
    }
}

/// Aggregate for one (topology, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub topology: String,
    pub method: Method,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean evaluations to success, failures counted as the budget.
    pub avg_evaluations: f64,
    /// Median evaluations to success, failures counted as the budget.
    pub median_evaluations: f64,
    pub avg_wall_time_s: f64,
    /// Median figure of merit of successful runs.
    pub median_ifom: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub budget: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

impl BenchReport {
    pub fn cell(&self, topology: &str, method: Method) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.topology.eq_ignore_ascii_case(topology) && c.method == method)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn summarize(topology: &str, method: Method, runs: &[&RunRecord], budget: usize) -> CellSummary {
    let n = runs.len();
    let successes = runs.iter().filter(|r| r.success).count();
    let charged: Vec<f64> = runs.iter().map(|r| r.charged_evaluations(budget) as f64).collect();
    CellSummary {
        topology: topology.to_string(),
        method,
        runs: n,
        successes,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        avg_evaluations: charged.iter().sum::<f64>() / n.max(1) as f64,
        median_evaluations: median(charged).unwrap_or(budget as f64),
        avg_wall_time_s: runs.iter().map(|r| r.wall_time_s).sum::<f64>() / n.max(1) as f64,
        median_ifom: median(runs.iter().filter(|r| r.success).filter_map(|r| r.ifom).collect()),
    }
}

struct Job<'a> {
    topology: &'a str,
    desc: &'a TopologyDescriptor,
    method: Method,
    run: usize,
    seed: u64,
    spec: DesignSpec,
}

fn record_from(job: &Job<'_>, d: Result<SizedDesign, String>, wall: f64) -> RunRecord {
    let mut r = RunRecord {
        topology: job.topology.to_string(),
        method: job.method,
        run: job.run,
        seed: job.seed,
        spec: job.spec,
        success: false,
        evaluations_to_success: None,
        evaluations: 0,
        wall_time_s: wall,
        i_dd: None,
        gbw_hz: None,
        pm_deg: None,
        ifom: None,
        error: None,
    };
    match d {
        Ok(d) => {
            r.success = d.success;
            r.evaluations = d.history.total_evaluations;
            r.evaluations_to_success = if d.success { d.history.first_feasible_evaluation } else { None };
            r.i_dd = Some(d.i_dd);
            r.gbw_hz = d.metrics.as_ref().map(|m| m.gbw_hz);
            r.pm_deg = d.metrics.as_ref().map(|m| m.pm_deg);
            if d.success {
                r.ifom = d.metrics.as_ref().map(|m| ifom_s(m.gbw_hz, job.spec.cl, d.i_dd));
            }
        }
        Err(e) => r.error = Some(e),
    }
    r
}

fn run_job(job: &Job<'_>, cfg: &BenchConfig, profile: &ProcessProfile) -> RunRecord {
    let clock = Stopwatch::start();
    let outcome = match job.method.optimizer() {
        None => {
            let pc = PipelineConfig {
                total_budget: Some(cfg.budget),
                stop_on_success: cfg.stop_on_success,
                seed: job.seed,
                ..cfg.pipeline.clone()
            };
            design(&job.spec, job.desc, profile, &pc, None).map_err(|e| e.to_string())
        }
        Some(kind) => optimize_only(
            &job.spec,
            job.desc,
            profile,
            kind,
            &cfg.optimizers,
            cfg.budget,
            job.seed,
            cfg.stop_on_success,
            cfg.pipeline.penalty_weight,
        )
        .map(|r| r.design)
        .map_err(|e| e.to_string()),
    };
    record_from(job, outcome, clock.elapsed_s())
}

/// Specs for `topology`: a stream seeded by the base seed and the
/// topology's position, so adding topologies never reshuffles others.
fn specs_for(cfg: &BenchConfig, index: usize, topology: &str) -> Vec<DesignSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)));
    sample_specs(
        &mut rng,
        &cfg.range_for(topology),
        cfg.pm_min,
        cfg.gain_min_for(topology),
        cfg.n_runs,
    )
}

/// Runs every method on the same sampled specs with the same budget.
/// Failed runs are recorded, never fatal.
pub fn run_comparison(cfg: &BenchConfig, profile: &ProcessProfile) -> Result<BenchReport, BenchError> {
    run_comparison_with(cfg, profile, |_| {})
}

/// As [`run_comparison`], calling `on_run` after each run completes.
pub fn run_comparison_with(
    cfg: &BenchConfig,
    profile: &ProcessProfile,
    on_run: impl Fn(&RunRecord) + Sync,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let descs: Vec<TopologyDescriptor> = cfg
        .topologies
        .iter()
        .map(|t| builtin(t))
        .collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    for (ti, (name, desc)) in cfg.topologies.iter().zip(&descs).enumerate() {
        for (run, spec) in specs_for(cfg, ti, name).into_iter().enumerate() {
            for &method in &cfg.methods {
                jobs.push(Job {
                    topology: desc.name(),
                    desc,
                    method,
                    run,
                    seed: cfg.seed.wrapping_add(run as u64),
                    spec,
                });
            }
        }
    }
    let exec = |job: &Job<'_>| {
        let r = run_job(job, cfg, profile);
        on_run(&r);
        r
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<RunRecord> = {
        use rayon::prelude::*;
        jobs.par_iter().map(exec).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<RunRecord> = jobs.iter().map(exec).collect();

    let mut cells = Vec::new();
    for desc in &descs {
        for &method in &cfg.methods {
            let rs: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.topology == desc.name() && r.method == method)
                .collect();
            cells.push(summarize(desc.name(), method, &rs, cfg.budget));
        }
    }
    Ok(BenchReport {
        budget: cfg.budget,
        n_runs: cfg.n_runs,
        seed: cfg.seed,
        cells,
        runs,
    })
}

/// Largest pipeline-to-best-raw ratio of median evaluations accepted by
/// the trend check.
pub const EFFICIENCY_RATIO: f64 = 0.76;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Per topology: the pipeline succeeds at least as often as every raw
/// optimizer, succeeds at all, and needs at most [`EFFICIENCY_RATIO`] times
/// the best raw optimizer's median evaluations.
pub fn check_trends(report: &BenchReport) -> Vec<TrendCheck> {
    let mut checks = Vec::new();
    let topologies: Vec<&str> = {
        let mut t: Vec<&str> = report.cells.iter().map(|c| c.topology.as_str()).collect();
        t.dedup();
        t
    };
    for topo in topologies {
        let Some(p) = report.cell(topo, Method::Pipeline) else {
            continue;
        };
        checks.push(TrendCheck {
            name: format!("{topo}: pipeline succeeds"),
            passed: p.successes > 0,
            detail: format!("{}/{} runs", p.successes, p.runs),
        });
        let raw: Vec<&CellSummary> = [Method::Abc, Method::Turbo5, Method::Turbo1]
            .iter()
            .filter_map(|&m| report.cell(topo, m))
            .collect();
        for r in &raw {
            checks.push(TrendCheck {
                name: format!("{topo}: pipeline success rate >= {}", r.method),
                passed: p.success_rate >= r.success_rate,
                detail: format!("{:.2} vs {:.2}", p.success_rate, r.success_rate),
            });
        }
        if let Some(best) = raw.iter().map(|r| r.median_evaluations).min_by(f64::total_cmp) {
            checks.push(TrendCheck {
                name: format!("{topo}: median evaluations <= {EFFICIENCY_RATIO} x best raw optimizer"),
                passed: p.median_evaluations <= EFFICIENCY_RATIO * best,
                detail: format!("{} vs {}", p.median_evaluations, best),
            });
        }
    }
    checks
}
