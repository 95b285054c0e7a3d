//! Device sizing: per-stage target matching followed by whole-circuit
//! refinement.

mod evaluator;
mod refine;
mod subproblem;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::AcMetrics;
use crate::clock::Stopwatch;
use crate::device::{DeviceError, DeviceParams, ProcessProfile, SmallSignalParams};
use crate::kb::{CacheKey, KbError, ReasoningCache, TopologyDescriptor};
use crate::optimizers::{OptimizerError, OptimizerKind, OptimizerSettings, DEFAULT_PENALTY_WEIGHT};
use crate::reasoning::{decompose, solve_targets, solve_targets_with_resistances, DerivedTargets, DesignSpec, ReasoningConfig, ReasoningError};

pub use evaluator::{Evaluation, Evaluator, Knobs};
pub use refine::{global_refine, optimize_only, OptimizerOnlyRun};
pub use subproblem::{solve_subproblem, SubOutcome};

#[derive(Debug, thiserror::Error)]
pub enum SizingError {
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error("sub-problem {stage} stopped after {evaluations} evaluations (best residual {:.3e})",
        residual_history.last().copied().unwrap_or(f64::INFINITY))]
    BudgetExhausted {
        stage: String,
        state: Box<DeviceParams>,
        residual_history: Vec<f64>,
        evaluations: usize,
    },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Cache(#[from] KbError),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("no evaluable design: {0}")]
    Evaluation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Evaluations allowed per sub-problem.
    pub subproblem_budget: usize,
    /// Evaluations allowed for whole-circuit refinement.
    pub global_budget: usize,
    /// Cap on evaluations across every phase.
    pub total_budget: Option<usize>,
    /// Relative tolerance for matching targets.
    pub gm_tolerance: f64,
    pub use_subproblem_optimizer: bool,
    pub use_global_optimizer: bool,
    pub subproblem_optimizer: OptimizerKind,
    pub global_optimizer: OptimizerKind,
    pub optimizers: OptimizerSettings,
    /// Unit-cube width of the initial population around a warm start.
    pub init_radius: f64,
    /// Times the targets are re-derived from the output resistances of the
    /// sized devices, each followed by another round of sub-problems.
    pub retarget_passes: usize,
    /// Let refinement move the passives too instead of keeping the derived values.
    pub refine_passives: bool,
    /// End the run at the first design that meets the spec.
    pub stop_on_success: bool,
    pub penalty_weight: f64,
    pub seed: u64,
    pub reasoning: ReasoningConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            subproblem_budget: 20,
            global_budget: 100,
            total_budget: None,
            gm_tolerance: 0.05,
            use_subproblem_optimizer: true,
            use_global_optimizer: true,
            subproblem_optimizer: OptimizerKind::Abc,
            global_optimizer: OptimizerKind::Abc,
            optimizers: OptimizerSettings::default(),
            init_radius: 0.05,
            retarget_passes: 2,
            refine_passives: false,
            stop_on_success: false,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            seed: 0,
            reasoning: ReasoningConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), SizingError> {
        if self.subproblem_budget < 1 {
            return Err(SizingError::Config("subproblem_budget must be at least 1".into()));
        }
        if !(self.gm_tolerance > 0.0 && self.gm_tolerance < 1.0) {
            return Err(SizingError::Config("gm_tolerance must lie in (0, 1)".into()));
        }
        if !(self.init_radius > 0.0 && self.init_radius <= 1.0) {
            return Err(SizingError::Config("init_radius must lie in (0, 1]".into()));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(SizingError::Config("penalty_weight must be positive".into()));
        }
        Ok(())
    }

    fn over_total(&self, ev: &Evaluator<'_>) -> bool {
        self.total_budget.is_some_and(|t| ev.count() >= t)
    }

    fn remaining_in(&self, local: usize, ev: &Evaluator<'_>) -> usize {
        match self.total_budget {
            Some(t) => local.min(t.saturating_sub(ev.count())),
            None => local,
        }
    }

    /// Optimizer settings shrunk to fit `budget`, or `None` if it cannot.
    fn sized_settings(&self, kind: OptimizerKind, dim: usize, budget: usize) -> Option<OptimizerSettings> {
        let mut s = self.optimizers.clone();
        match kind {
            OptimizerKind::Abc => {
                let n = s.abc.n_food_sources.unwrap_or((2 * dim).max(10));
                if budget < 2 {
                    return None;
                }
                s.abc.n_food_sources = Some(n.min(budget));
            }
            OptimizerKind::Turbo1 | OptimizerKind::Turbo5 => {
                let m = if kind == OptimizerKind::Turbo5 { 5 } else { 1 };
                let n = s.turbo.initial_design_size(dim, budget).max(1);
                if m * n > budget {
                    return None;
                }
            }
        }
        Some(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: String,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblemRecord {
    pub stage: String,
    pub evaluations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DesignHistory {
    pub phases: Vec<PhaseRecord>,
    pub subproblems: Vec<SubProblemRecord>,
    pub total_evaluations: usize,
    /// 1-based evaluation index at which the spec was first met.
    pub first_feasible_evaluation: Option<usize>,
    pub targets_from_cache: bool,
}

impl DesignHistory {
    pub fn evaluations(&self) -> usize {
        self.phases.iter().map(|p| p.evaluations).sum()
    }

    pub fn wall_time_s(&self) -> f64 {
        self.phases.iter().map(|p| p.wall_time_s).sum()
    }
}

/// Final sizing with its measured performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizedDesign {
    pub topology: String,
    pub spec: DesignSpec,
    pub targets: Option<DerivedTargets>,
    pub devices: DeviceParams,
    pub ssp: SmallSignalParams,
    pub metrics: Option<AcMetrics>,
    /// Supply current (A).
    pub i_dd: f64,
    pub penalty: f64,
    pub success: bool,
    pub history: DesignHistory,
}

impl SizedDesign {
    fn from_best(
        ev: &mut Evaluator<'_>,
        desc: &TopologyDescriptor,
        targets: Option<DerivedTargets>,
        mut history: DesignHistory,
    ) -> Result<Self, SizingError> {
        let (devices, e) = ev
            .best()
            .cloned()
            .ok_or_else(|| SizingError::Evaluation("nothing was evaluated".into()))?;
        let ssp = e
            .ssp
            .ok_or_else(|| SizingError::Evaluation("device model failed at every evaluated state".into()))?;
        history.total_evaluations = ev.count();
        history.first_feasible_evaluation = ev.first_feasible();
        Ok(SizedDesign {
            topology: desc.name().to_string(),
            spec: *ev.spec(),
            targets,
            devices,
            i_dd: ssp.i_dd,
            ssp,
            success: e.feasible,
            metrics: e.metrics,
            penalty: e.penalty,
            history,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("design serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }
}

/// Mid-bounds device state used to start every run.
pub fn initial_state(ev: &Evaluator<'_>) -> DeviceParams {
    let mut state = ev.binding().mid_bounds(&ev.profile().bounds);
    for (p, slot) in state.passives.iter_mut().zip(&ev.binding().passives) {
        let [lo, hi] = evaluator::passive_bounds(slot.kind, slot.bounds, ev.profile());
        p.value = p.value.clamp(lo, hi);
    }
    state
}

/// Full pipeline: targets (cached when possible), sub-problems in stage
/// order, then global refinement.
pub fn design(
    spec: &DesignSpec,
    desc: &TopologyDescriptor,
    profile: &ProcessProfile,
    cfg: &PipelineConfig,
    cache: Option<&ReasoningCache>,
) -> Result<SizedDesign, SizingError> {
    spec.validate()?;
    cfg.validate()?;
    let mut history = DesignHistory::default();

    let clock = Stopwatch::start();
    let key = CacheKey::new(desc.name(), spec, &cfg.reasoning);
    let cached = cache.and_then(|c| c.get(&key).ok().flatten());
    history.targets_from_cache = cached.is_some();
    let targets = match cached {
        Some(t) => t,
        None => solve_targets(spec, desc, &cfg.reasoning)?,
    };
    history.phases.push(PhaseRecord {
        phase: "reasoning".into(),
        evaluations: 0,
        wall_time_s: clock.elapsed_s(),
    });

    let clock = Stopwatch::start();
    let mut ev = Evaluator::new(desc, profile, *spec, cfg.penalty_weight);
    let mut state = initial_state(&ev);
    run_subproblems(&targets, desc, &mut state, &mut ev, cfg, &mut history)?;
    let mut current = targets.clone();
    for _ in 0..cfg.retarget_passes {
        if cfg.over_total(&ev) || (cfg.stop_on_success && ev.first_feasible().is_some()) {
            break;
        }
        let Some(ssp) = ev.evaluate(&state).ssp else { break };
        let measured: BTreeMap<String, f64> = current
            .assumed_output_resistance
            .keys()
            .filter_map(|k| ssp.get(k).map(|v| (k.clone(), v)))
            .collect();
        let Ok(next) = solve_targets_with_resistances(spec, desc, &cfg.reasoning, &measured) else {
            break;
        };
        current = next;
        if current.is_met_by(&ssp) {
            break;
        }
        run_subproblems(&current, desc, &mut state, &mut ev, cfg, &mut history)?;
    }
    history.phases.push(PhaseRecord {
        phase: "subproblems".into(),
        evaluations: ev.count(),
        wall_time_s: clock.elapsed_s(),
    });

    let refined = global_refine(&state, &mut ev, desc, cfg)?;
    history.phases.extend(refined.history.phases);
    let result = SizedDesign::from_best(&mut ev, desc, Some(current), history)?;
    if result.success {
        if let Some(c) = cache {
            c.put(&key, &targets)?;
        }
    }
    Ok(result)
}

/// Runs every sub-problem of `targets` in order, carrying `state` forward.
fn run_subproblems(
    targets: &DerivedTargets,
    desc: &TopologyDescriptor,
    state: &mut DeviceParams,
    ev: &mut Evaluator<'_>,
    cfg: &PipelineConfig,
    history: &mut DesignHistory,
) -> Result<(), SizingError> {
    for sub in decompose(targets, desc) {
        if cfg.over_total(ev) || (cfg.stop_on_success && ev.first_feasible().is_some()) {
            break;
        }
        let before = ev.count();
        let record = match solve_subproblem(&sub, state, ev, cfg) {
            Ok(o) => {
                *state = o.state;
                SubProblemRecord {
                    stage: sub.stage.clone(),
                    evaluations: ev.count() - before,
                    converged: true,
                    residual_history: o.residual_history,
                }
            }
            Err(SizingError::BudgetExhausted {
                state: s,
                residual_history,
                ..
            }) => {
                *state = *s;
                SubProblemRecord {
                    stage: sub.stage.clone(),
                    evaluations: ev.count() - before,
                    converged: false,
                    residual_history,
                }
            }
            Err(e) => return Err(e),
        };
        history.subproblems.push(record);
    }
    Ok(())
}
