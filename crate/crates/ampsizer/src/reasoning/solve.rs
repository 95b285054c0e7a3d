//! Damped Newton solve of a descriptor's design relations.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{
    BoundSide, DerivedTargets, DesignSpec, InfeasibleReason, PredictedMetrics, ReasoningConfig,
    ReasoningError, Target,
};
use crate::analysis::{ac_metrics, assemble_from_values, AnalysisError};
use crate::kb::expr::{ProductSum, GBW, LOAD_CAPACITANCE, QUALITY, SEPARATION};
use crate::kb::{RelationKind, TopologyDescriptor, VariableKind, VariableRole};

/// Largest log-space step taken in one Newton iteration.
const MAX_LOG_STEP: f64 = 3.0;
/// Start points, as fractions of each unknown's log-range.
const START_FRACTIONS: [f64; 5] = [0.5, 0.25, 0.75, 0.1, 0.9];

struct System<'a> {
    equations: Vec<&'a ProductSum>,
    slots: Vec<usize>,
    base: Vec<f64>,
}

impl System<'_> {
    fn values(&self, y: &[f64]) -> Vec<f64> {
        let mut v = self.base.clone();
        for (&slot, &yi) in self.slots.iter().zip(y) {
            v[slot] = yi.exp();
        }
        v
    }

    /// Each equation divided by the sum of its absolute terms.
    fn residual(&self, y: &[f64]) -> Vec<f64> {
        let v = self.values(y);
        self.equations
            .iter()
            .map(|e| {
                let (s, a) = e.eval_with_scale(&v);
                if a > 0.0 {
                    s / a
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let v = self.values(y);
        let n = self.slots.len();
        let mut j = DMatrix::zeros(self.equations.len(), n);
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for (i, e) in self.equations.iter().enumerate() {
            let (s, a) = e.eval_with_scale(&v);
            if a == 0.0 {
                continue;
            }
            g.iter_mut().for_each(|x| *x = 0.0);
            h.iter_mut().for_each(|x| *x = 0.0);
            e.log_gradient(&v, &self.slots, &mut g, &mut h);
            for k in 0..n {
                j[(i, k)] = (g[k] * a - s * h[k]) / (a * a);
            }
        }
        j
    }
}

struct NewtonRun {
    y: Vec<f64>,
    converged: bool,
    history: Vec<f64>,
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn newton(sys: &System, y0: Vec<f64>, cfg: &ReasoningConfig) -> NewtonRun {
    let mut y = y0;
    let mut r = sys.residual(&y);
    let mut history = Vec::new();
    for _ in 0..cfg.newton_max_iter {
        let nr = max_abs(&r);
        history.push(nr);
        if nr < cfg.newton_tol {
            return NewtonRun {
                y,
                converged: true,
                history,
            };
        }
        let j = sys.jacobian(&y);
        let rhs = -DVector::from_column_slice(&r);
        let Ok(mut step) = j.svd(true, true).solve(&rhs, 1e-14) else {
            break;
        };
        let biggest = step.amax();
        if !biggest.is_finite() || biggest == 0.0 {
            break;
        }
        if biggest > MAX_LOG_STEP {
            step *= MAX_LOG_STEP / biggest;
        }
        let phi0: f64 = r.iter().map(|v| v * v).sum();
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-6 {
            let cand: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
            let rc = sys.residual(&cand);
            let phi: f64 = rc.iter().map(|v| v * v).sum();
            if phi <= (1.0 - 1e-4 * alpha) * phi0 {
                y = cand;
                r = rc;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let nr = max_abs(&r);
    history.push(nr);
    NewtonRun {
        y,
        converged: nr < cfg.newton_tol,
        history,
    }
}

struct Solution {
    values: Vec<f64>,
}

/// Solves the equality relations for the unknowns with caps fixed.
fn solve_relations(
    desc: &TopologyDescriptor,
    spec: &DesignSpec,
    gbw_target: f64,
    separation: f64,
    cfg: &ReasoningConfig,
) -> Result<Solution, ReasoningError> {
    let table = desc.symbols();
    let mut base = table.blank();
    base[table.get(LOAD_CAPACITANCE).expect("reserved")] = spec.cl;
    base[table.get(GBW).expect("reserved")] = gbw_target;
    base[table.get(SEPARATION).expect("reserved")] = separation;
    base[table.get(QUALITY).expect("reserved")] = cfg.pair_q;
    for v in desc.variables() {
        let slot = table.get(&v.symbol).expect("declared");
        if let Some(x) = v.value {
            base[slot] = x;
        } else if v.role == VariableRole::Design && v.kind == VariableKind::Capacitance {
            base[slot] = (cfg.cap_ratio * spec.cl).clamp(v.bounds[0], v.bounds[1]);
        }
    }

    let unknowns: Vec<_> = desc
        .unknown_symbols()
        .into_iter()
        .map(|s| desc.variable(&s).expect("declared").clone())
        .collect();
    let sys = System {
        equations: desc
            .relations()
            .iter()
            .filter(|r| r.kind == RelationKind::Eq)
            .map(|r| &r.expr)
            .collect(),
        slots: unknowns.iter().map(|v| table.get(&v.symbol).expect("declared")).collect(),
        base,
    };

    let mut first_history = None;
    let mut first_violation = None;
    for frac in START_FRACTIONS {
        let y0: Vec<f64> = unknowns
            .iter()
            .map(|v| v.bounds[0].ln() * (1.0 - frac) + v.bounds[1].ln() * frac)
            .collect();
        let run = newton(&sys, y0, cfg);
        if first_history.is_none() {
            first_history = Some(run.history.clone());
        }
        if !run.converged {
            continue;
        }
        let values = sys.values(&run.y);
        let violation = unknowns.iter().zip(&sys.slots).find_map(|(v, &slot)| {
            let x = values[slot];
            let slack = 1e-9;
            if x < v.bounds[0] * (1.0 - slack) {
                Some((v.symbol.clone(), x, v.bounds[0], BoundSide::Lower))
            } else if x > v.bounds[1] * (1.0 + slack) {
                Some((v.symbol.clone(), x, v.bounds[1], BoundSide::Upper))
            } else {
                None
            }
        });
        match violation {
            None => return Ok(Solution { values }),
            Some(vio) => {
                first_violation.get_or_insert(vio);
            }
        }
    }
    match first_violation {
        Some((symbol, value, limit, side)) => Err(ReasoningError::Infeasible(InfeasibleReason::Bound {
            symbol,
            value,
            limit,
            side,
        })),
        None => Err(ReasoningError::Solver {
            residual_history: first_history.unwrap_or_default(),
        }),
    }
}

/// Output resistances implied by an even split of the required DC gain,
/// unless `measured` already supplies them.
fn estimate_output_resistances(
    desc: &TopologyDescriptor,
    spec: &DesignSpec,
    values: &mut [f64],
    cfg: &ReasoningConfig,
    measured: Option<&BTreeMap<String, f64>>,
) -> BTreeMap<String, f64> {
    let table = desc.symbols();
    let per_stage = 10f64.powf((spec.gain_min + cfg.gain_margin_db) / (20.0 * desc.num_stages() as f64));
    let mut out = BTreeMap::new();
    for d in desc.devices() {
        let Some(ro) = &d.ro else { continue };
        let b = desc.variable(ro).expect("declared").bounds;
        let r = match measured.and_then(|m| m.get(ro)) {
            Some(&r) if r.is_finite() && r > 0.0 => r,
            _ => {
                let gm = values[table.get(&d.gm).expect("declared")];
                (per_stage / gm).clamp(b[0], b[1])
            }
        };
        values[table.get(ro).expect("declared")] = r;
        out.insert(ro.clone(), r);
    }
    out
}

/// Derives numeric targets for every design variable of `desc`.
///
/// Capacitors are fixed at `cap_ratio * C_L`, the equality relations are
/// solved by damped Newton in log space, and the assembled response is
/// checked against the spec. A phase shortfall widens the pole separation
/// by `separation_growth`. With enough phase, a bandwidth outside
/// `[gbw_min, gbw_min * gbw_margin * (1 + tolerance)]` rescales the design
/// frequency. Either way the relations are solved again.
pub fn solve_targets(
    spec: &DesignSpec,
    desc: &TopologyDescriptor,
    cfg: &ReasoningConfig,
) -> Result<DerivedTargets, ReasoningError> {
    solve(spec, desc, cfg, None)
}

/// Like [`solve_targets`], but verifies the response with the given output
/// resistances (typically read back from sized devices) in place of the
/// even-gain-split estimate.
pub fn solve_targets_with_resistances(
    spec: &DesignSpec,
    desc: &TopologyDescriptor,
    cfg: &ReasoningConfig,
    measured: &BTreeMap<String, f64>,
) -> Result<DerivedTargets, ReasoningError> {
    solve(spec, desc, cfg, Some(measured))
}

fn solve(
    spec: &DesignSpec,
    desc: &TopologyDescriptor,
    cfg: &ReasoningConfig,
    measured: Option<&BTreeMap<String, f64>>,
) -> Result<DerivedTargets, ReasoningError> {
    spec.validate()?;
    let design_gbw = spec.gbw_min * cfg.gbw_margin;
    let mut gbw_target = design_gbw;
    let mut separation = cfg.separation_factor;
    let mut last = None;
    let mut fallback = None;
    let mut tried = separation;
    for attempt in 0..=cfg.max_retries {
        tried = separation;
        let Solution { mut values } = solve_relations(desc, spec, gbw_target, separation, cfg)?;
        for r in desc.relations() {
            let v = r.expr.eval(&values);
            let ok = match r.kind {
                RelationKind::Eq => true,
                RelationKind::Ge => v >= 0.0,
                RelationKind::Le => v <= 0.0,
            };
            if !ok {
                return Err(ReasoningError::Infeasible(InfeasibleReason::Relation {
                    label: r.label.clone(),
                    value: v,
                }));
            }
        }
        let ro = estimate_output_resistances(desc, spec, &mut values, cfg, measured);
        let tf = assemble_from_values(desc, &values)?;
        match ac_metrics(&tf) {
            Ok(m) if m.stable && m.gbw_hz >= spec.gbw_min && m.pm_deg >= spec.pm_min => {
                let dominant = m
                    .poles
                    .iter()
                    .map(|p| p.norm())
                    .fold(f64::INFINITY, f64::min)
                    / (2.0 * PI);
                let targets = desc
                    .design_variables()
                    .into_iter()
                    .map(|s| {
                        let slot = desc.symbols().get(s).expect("declared");
                        (
                            s.to_string(),
                            Target {
                                value: values[slot],
                                tolerance: cfg.tolerance,
                            },
                        )
                    })
                    .collect();
                let found = DerivedTargets {
                    topology: desc.name().to_string(),
                    spec: *spec,
                    targets,
                    assumed_output_resistance: ro,
                    gbw_target_hz: gbw_target,
                    dominant_pole_hz: dominant,
                    pair_omega0: separation * 2.0 * PI * gbw_target,
                    pair_q: cfg.pair_q,
                    separation_factor: separation,
                    retries: attempt,
                    predicted: PredictedMetrics {
                        dc_gain_db: m.dc_gain_db,
                        gbw_hz: m.gbw_hz,
                        pm_deg: m.pm_deg,
                        stable: m.stable,
                    },
                };
                if m.gbw_hz <= design_gbw * (1.0 + cfg.tolerance) || attempt == cfg.max_retries {
                    return Ok(found);
                }
                if fallback.is_none() {
                    fallback = Some(found);
                }
                last = Some((m.gbw_hz, m.pm_deg));
                gbw_target *= design_gbw / m.gbw_hz;
                continue;
            }
            Ok(m) if m.stable && m.pm_deg >= spec.pm_min && m.gbw_hz > 0.0 => {
                last = Some((m.gbw_hz, m.pm_deg));
                gbw_target *= spec.gbw_min / m.gbw_hz * cfg.gbw_margin.sqrt();
                continue;
            }
            Ok(m) => last = Some((m.gbw_hz, m.pm_deg)),
            Err(AnalysisError::NoCrossing { .. }) => last = Some((0.0, 0.0)),
            Err(e) => return Err(e.into()),
        }
        separation *= cfg.separation_growth;
    }
    if let Some(found) = fallback {
        return Ok(found);
    }
    let (gbw_hz, pm_deg) = last.unwrap_or((0.0, 0.0));
    Err(ReasoningError::Infeasible(InfeasibleReason::Shortfall {
        gbw_hz,
        pm_deg,
        separation_factor: tried,
    }))
}
