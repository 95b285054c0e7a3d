//! Whole-circuit refinement and optimizer-only runs.

use crate::clock::Stopwatch;
use crate::device::{DeviceParams, ProcessProfile};
use crate::kb::TopologyDescriptor;
use crate::optimizers::{run_optimizer, OptResult, OptimizerKind, OptimizerSettings, RunOptions};
use crate::reasoning::DesignSpec;

use super::evaluator::{Evaluator, Knobs};
use super::{initial_state, DesignHistory, PhaseRecord, PipelineConfig, SizedDesign, SizingError};

/// Minimizes penalized supply current over the transistor knobs (and the
/// passives when `refine_passives` is set), warm-started at `state`, within the global budget (and whatever the total budget leaves).
///
/// The returned design is the best state the evaluator has seen, so it is
/// never worse than `state`.
pub fn global_refine(
    state: &DeviceParams,
    ev: &mut Evaluator<'_>,
    desc: &TopologyDescriptor,
    cfg: &PipelineConfig,
) -> Result<SizedDesign, SizingError> {
    let clock = Stopwatch::start();
    let start = ev.count();
    ev.evaluate(state);
    let done = cfg.stop_on_success && ev.first_feasible().is_some();
    let budget = cfg.remaining_in(cfg.global_budget, ev);
    if cfg.use_global_optimizer && !done && budget > 0 {
        let knobs = if cfg.refine_passives {
            Knobs::all(ev.binding(), ev.profile())?
        } else {
            Knobs::transistors(ev.binding(), ev.profile())?
        };
        if let Some(settings) = cfg.sized_settings(cfg.global_optimizer, knobs.len(), budget) {
            let opts = RunOptions {
                warm_start: Some(knobs.read(ev.binding(), state)),
                init_radius: Some(cfg.init_radius),
                feasibility_threshold: Some(1.0),
                stop_when_feasible: cfg.stop_on_success,
                ..RunOptions::new(budget, cfg.seed)
            };
            run_knobs(ev, &knobs, state, cfg.global_optimizer, &opts, &settings)?;
        }
    }
    let history = DesignHistory {
        phases: vec![PhaseRecord {
            phase: "global".into(),
            evaluations: ev.count() - start,
            wall_time_s: clock.elapsed_s(),
        }],
        ..DesignHistory::default()
    };
    SizedDesign::from_best(ev, desc, None, history)
}

fn run_knobs(
    ev: &mut Evaluator<'_>,
    knobs: &Knobs,
    base: &DeviceParams,
    kind: OptimizerKind,
    opts: &RunOptions,
    settings: &OptimizerSettings,
) -> Result<OptResult, SizingError> {
    let binding = ev.binding().clone();
    let mut objective = |x: &[f64]| {
        let mut trial = base.clone();
        knobs.write(&binding, &mut trial, x);
        ev.evaluate(&trial).penalty
    };
    Ok(run_optimizer(kind, &mut objective, knobs.space(), opts, settings)?)
}

/// An optimizer run from the mid-bounds state with no targets.
#[derive(Debug, Clone)]
pub struct OptimizerOnlyRun {
    pub design: SizedDesign,
    pub result: OptResult,
}

/// Runs `kind` alone on the penalized supply current, seeded with the
/// mid-bounds state, for comparison with the pipeline.
#[allow(clippy::too_many_arguments)]
pub fn optimize_only(
    spec: &DesignSpec,
    desc: &TopologyDescriptor,
    profile: &ProcessProfile,
    kind: OptimizerKind,
    settings: &OptimizerSettings,
    budget: usize,
    seed: u64,
    stop_on_success: bool,
    penalty_weight: f64,
) -> Result<OptimizerOnlyRun, SizingError> {
    spec.validate()?;
    let clock = Stopwatch::start();
    let mut ev = Evaluator::new(desc, profile, *spec, penalty_weight);
    let knobs = Knobs::all(ev.binding(), profile)?;
    let state = initial_state(&ev);
    let opts = RunOptions {
        warm_start: Some(knobs.read(ev.binding(), &state)),
        feasibility_threshold: Some(1.0),
        stop_when_feasible: stop_on_success,
        ..RunOptions::new(budget, seed)
    };
    let result = run_knobs(&mut ev, &knobs, &state, kind, &opts, settings)?;
    let history = DesignHistory {
        phases: vec![PhaseRecord {
            phase: kind.label().to_string(),
            evaluations: ev.count(),
            wall_time_s: clock.elapsed_s(),
        }],
        ..DesignHistory::default()
    };
    let design = SizedDesign::from_best(&mut ev, desc, None, history)?;
    Ok(OptimizerOnlyRun { design, result })
}
