//! Read, estimate, optimize loop for one stage.

use crate::device::{estimate_wl, DeviceParams, SmallSignalParams};
use crate::kb::VariableKind;
use crate::optimizers::{run_optimizer, RunOptions};
use crate::reasoning::SubProblem;

use super::evaluator::{passive_bounds, Evaluator, Knobs};
use super::{PipelineConfig, SizingError};

/// A sub-problem that met its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SubOutcome {
    pub state: DeviceParams,
    /// Best-so-far largest relative error, one entry per read.
    pub residual_history: Vec<f64>,
    pub evaluations: usize,
}

fn largest_error(sub: &SubProblem, ssp: &SmallSignalParams) -> f64 {
    sub.max_residual(ssp)
}

/// One calculator step: W/L toward each owned transconductance (drain
/// current takes over once W/L saturates), passives set directly.
fn calculate(sub: &SubProblem, state: &DeviceParams, ssp: &SmallSignalParams, ev: &Evaluator<'_>) -> DeviceParams {
    let bounds = ev.profile().bounds;
    let mut next = state.clone();
    for owned in &sub.owned {
        match owned.kind {
            VariableKind::Transconductance => {
                let Some(slot) = ev.binding().device_for(&owned.symbol) else {
                    continue;
                };
                let (Some(t), Some(gm)) = (state.transistor(&slot.name), ssp.get(&owned.symbol)) else {
                    continue;
                };
                let est = estimate_wl(gm, owned.target.value, t, &bounds);
                let mut t = est.transistor;
                if est.clamped {
                    t.id = (t.id * est.residual_ratio * est.residual_ratio).clamp(bounds.id[0], bounds.id[1]);
                }
                if let Some(dst) = next.transistor_mut(&slot.name) {
                    *dst = t;
                }
            }
            kind => {
                let Some(slot) = ev.binding().passives.iter().find(|p| p.symbol == owned.symbol) else {
                    continue;
                };
                let [lo, hi] = passive_bounds(kind, slot.bounds, ev.profile());
                if let Some(p) = next.passive_mut(&owned.symbol) {
                    p.value = owned.target.value.clamp(lo, hi);
                }
            }
        }
    }
    next
}

/// Matches the owned targets of `sub` starting from `state`.
///
/// Each round reads the circuit, stops if every owned value is within
/// `cfg.gm_tolerance`, and otherwise applies the calculator. When the
/// calculator can make no further progress the configured optimizer takes
/// the remaining budget once. Running out of budget, or stalling, returns
/// [`SizingError::BudgetExhausted`] with the best state found.
pub fn solve_subproblem(
    sub: &SubProblem,
    state: &DeviceParams,
    ev: &mut Evaluator<'_>,
    cfg: &PipelineConfig,
) -> Result<SubOutcome, SizingError> {
    let start = ev.count();
    let budget = cfg.subproblem_budget;
    let mut state = state.clone();
    let mut best_state = state.clone();
    let mut best = f64::INFINITY;
    let mut history = Vec::new();
    let mut optimizer_used = false;

    let exhausted = |best_state: DeviceParams, history: Vec<f64>, used: usize| SizingError::BudgetExhausted {
        stage: sub.stage.clone(),
        state: Box::new(best_state),
        residual_history: history,
        evaluations: used,
    };

    loop {
        if ev.count() - start >= budget || cfg.over_total(ev) {
            return Err(exhausted(best_state, history, ev.count() - start));
        }
        let e = ev.evaluate(&state);
        let Some(ssp) = e.ssp else {
            return Err(exhausted(best_state, history, ev.count() - start));
        };
        let r = largest_error(sub, &ssp);
        if r < best {
            best = r;
            best_state = state.clone();
        }
        history.push(best);
        if r <= cfg.gm_tolerance || (cfg.stop_on_success && ev.first_feasible().is_some()) {
            return Ok(SubOutcome {
                state,
                residual_history: history,
                evaluations: ev.count() - start,
            });
        }

        let next = calculate(sub, &state, &ssp, ev);
        if next != state {
            state = next;
            continue;
        }
        if !cfg.use_subproblem_optimizer || optimizer_used {
            return Err(exhausted(best_state, history, ev.count() - start));
        }
        optimizer_used = true;

        let symbols: Vec<&str> = sub.owned.iter().map(|o| o.symbol.as_str()).collect();
        let knobs = Knobs::for_symbols(ev.binding(), ev.profile(), &symbols)?;
        if knobs.is_empty() {
            return Err(exhausted(best_state, history, ev.count() - start));
        }
        // one evaluation stays reserved for reading the optimizer's answer
        let remaining = cfg.remaining_in(budget - (ev.count() - start), ev).saturating_sub(1);
        let settings = cfg.sized_settings(cfg.subproblem_optimizer, knobs.len(), remaining);
        let Some(settings) = settings else {
            return Err(exhausted(best_state, history, ev.count() - start));
        };
        let binding = ev.binding().clone();
        let base = state.clone();
        let mut objective = |x: &[f64]| {
            let mut trial = base.clone();
            knobs.write(&binding, &mut trial, x);
            let e = ev.evaluate(&trial);
            e.ssp.map_or(f64::MAX, |s| {
                sub.residuals(&s).iter().map(|r| r * r).sum::<f64>()
            })
        };
        let opts = RunOptions {
            warm_start: Some(knobs.read(&binding, &state)),
            init_radius: Some(cfg.init_radius),
            ..RunOptions::new(remaining, cfg.seed ^ 0x5eed_0001)
        };
        let result = run_optimizer(cfg.subproblem_optimizer, &mut objective, knobs.space(), &opts, &settings)?;
        knobs.write(&binding, &mut state, &result.best_point);
    }
}
