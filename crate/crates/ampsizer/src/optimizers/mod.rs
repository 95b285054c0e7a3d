//! Black-box optimizers (artificial bee colony and trust-region Bayesian
//! optimization) over a bounded search space, plus constraint penalties.

mod abc;
mod gp;
mod penalty;
mod turbo;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;

pub use abc::{abc_optimize, AbcConfig};
pub use gp::{GaussianProcess, GpHyperparameters, SurrogateError};
pub use penalty::{penalize, violations, Measurement, Violations, DEFAULT_PENALTY_WEIGHT};
pub use turbo::{turbo1, turbo_optimize, TurboConfig};

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("budget {budget} is smaller than the required initial population {required}")]
    Budget { budget: usize, required: usize },
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

/// Box-bounded search space. Optimizers work in the unit cube; each
/// dimension maps to its bounds linearly or logarithmically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, OptimizerError> {
        if dims.is_empty() {
            return Err(OptimizerError::Space("no dimensions".into()));
        }
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite() && d.lower < d.upper) {
                return Err(OptimizerError::Space(format!("{}: need lower < upper", d.name)));
            }
            if d.scale == Scale::Log && d.lower <= 0.0 {
                return Err(OptimizerError::Space(format!("{}: log scale needs lower > 0", d.name)));
            }
        }
        Ok(SearchSpace { dims })
    }

    /// Same bounds on every axis.
    pub fn uniform(dim: usize, lower: f64, upper: f64, scale: Scale) -> Result<Self, OptimizerError> {
        Self::new(
            (0..dim)
                .map(|i| Dimension {
                    name: format!("x{i}"),
                    lower,
                    upper,
                    scale,
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(u)
            .map(|(d, &t)| {
                let t = t.clamp(0.0, 1.0);
                let x = match d.scale {
                    Scale::Linear => d.lower + t * (d.upper - d.lower),
                    Scale::Log => (d.lower.ln() + t * (d.upper.ln() - d.lower.ln())).exp(),
                };
                x.clamp(d.lower, d.upper)
            })
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(x)
            .map(|(d, &v)| {
                let v = v.clamp(d.lower, d.upper);
                let t = match d.scale {
                    Scale::Linear => (v - d.lower) / (d.upper - d.lower),
                    Scale::Log => (v.ln() - d.lower.ln()) / (d.upper.ln() - d.lower.ln()),
                };
                t.clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(d, &v)| v >= d.lower && v <= d.upper)
    }
}

/// Per-run settings shared by every optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub seed: u64,
    /// A point (in space coordinates) included in the initial population.
    pub warm_start: Option<Vec<f64>>,
    /// Side of the unit-cube box around `warm_start` that the rest of the
    /// initial population is drawn from; `None` draws from the whole space.
    pub init_radius: Option<f64>,
    /// Objective values at or below this count as feasible.
    pub feasibility_threshold: Option<f64>,
    /// Stop as soon as a feasible value is seen.
    pub stop_when_feasible: bool,
}

impl RunOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        RunOptions {
            budget,
            seed,
            warm_start: None,
            init_radius: None,
            feasibility_threshold: None,
            stop_when_feasible: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Best point in space coordinates.
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub feasible: bool,
    /// Best value seen after each evaluation.
    pub trajectory: Vec<f64>,
    pub n_evals: usize,
    pub wall_time_s: f64,
    /// 1-based index of the first feasible evaluation.
    pub first_feasible_eval: Option<usize>,
}

impl OptResult {
    /// Writes `eval_index,best_value` rows.
    pub fn write_trajectory_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "eval_index,best_value")?;
        for (i, v) in self.trajectory.iter().enumerate() {
            writeln!(out, "{},{v:e}", i + 1)?;
        }
        out.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Abc,
    Turbo1,
    Turbo5,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            OptimizerKind::Abc => "ABC",
            OptimizerKind::Turbo1 => "TuRBO-1",
            OptimizerKind::Turbo5 => "TuRBO-5",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abc" => Ok(OptimizerKind::Abc),
            "turbo1" | "turbo-1" => Ok(OptimizerKind::Turbo1),
            "turbo5" | "turbo-5" => Ok(OptimizerKind::Turbo5),
            other => Err(format!("unknown optimizer '{other}' (expected abc, turbo1 or turbo5)")),
        }
    }
}

/// Optimizer settings as they appear in config files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub abc: AbcConfig,
    pub turbo: TurboConfig,
}

/// Runs `kind` with the given settings.
pub fn run_optimizer(
    kind: OptimizerKind,
    objective: &mut dyn FnMut(&[f64]) -> f64,
    space: &SearchSpace,
    opts: &RunOptions,
    settings: &OptimizerSettings,
) -> Result<OptResult, OptimizerError> {
    match kind {
        OptimizerKind::Abc => abc_optimize(objective, space, opts, &settings.abc),
        OptimizerKind::Turbo1 => turbo1(objective, space, opts, &settings.turbo),
        OptimizerKind::Turbo5 => turbo_optimize(
            objective,
            space,
            opts,
            &TurboConfig {
                n_trust_regions: 5,
                ..settings.turbo.clone()
            },
        ),
    }
}

/// Evaluation bookkeeping shared by the optimizers.
pub(crate) struct Tracker<'a> {
    objective: &'a mut dyn FnMut(&[f64]) -> f64,
    space: &'a SearchSpace,
    budget: usize,
    threshold: Option<f64>,
    stop_when_feasible: bool,
    trajectory: Vec<f64>,
    best_u: Vec<f64>,
    best_value: f64,
    first_feasible: Option<usize>,
    clock: Stopwatch,
}

impl<'a> Tracker<'a> {
    pub(crate) fn new(
        objective: &'a mut dyn FnMut(&[f64]) -> f64,
        space: &'a SearchSpace,
        opts: &RunOptions,
    ) -> Self {
        Tracker {
            objective,
            space,
            budget: opts.budget,
            threshold: opts.feasibility_threshold,
            stop_when_feasible: opts.stop_when_feasible,
            trajectory: Vec::with_capacity(opts.budget),
            best_u: vec![0.5; space.dim()],
            best_value: f64::INFINITY,
            first_feasible: None,
            clock: Stopwatch::start(),
        }
    }

    pub(crate) fn done(&self) -> bool {
        self.trajectory.len() >= self.budget || (self.stop_when_feasible && self.first_feasible.is_some())
    }

    /// Evaluates a unit-cube point; `None` once the run is over.
    pub(crate) fn eval(&mut self, u: &[f64]) -> Option<f64> {
        if self.done() {
            return None;
        }
        let u: Vec<f64> = u.iter().map(|t| t.clamp(0.0, 1.0)).collect();
        let x = self.space.from_unit(&u);
        let raw = (self.objective)(&x);
        let y = if raw.is_nan() { f64::MAX } else { raw.min(f64::MAX) };
        if y < self.best_value || self.trajectory.is_empty() {
            self.best_value = y;
            self.best_u = u;
        }
        self.trajectory.push(self.best_value);
        if self.first_feasible.is_none() && self.threshold.is_some_and(|t| y <= t) {
            self.first_feasible = Some(self.trajectory.len());
        }
        Some(y)
    }

    pub(crate) fn finish(self) -> OptResult {
        let feasible = match self.threshold {
            Some(t) => self.best_value <= t,
            None => !self.trajectory.is_empty(),
        };
        OptResult {
            best_point: self.space.from_unit(&self.best_u),
            best_value: self.best_value,
            feasible,
            n_evals: self.trajectory.len(),
            trajectory: self.trajectory,
            wall_time_s: self.clock.elapsed_s(),
            first_feasible_eval: self.first_feasible,
        }
    }
}

/// Initial point for slot `i` of a population: the warm start first, then
/// samples in a box around it or across the whole cube.
pub(crate) fn initial_point(
    i: usize,
    base: Vec<f64>,
    warm_u: Option<&[f64]>,
    radius: Option<f64>,
) -> Vec<f64> {
    match (warm_u, radius) {
        (Some(w), _) if i == 0 => w.to_vec(),
        (Some(w), Some(r)) => w
            .iter()
            .zip(base)
            .map(|(&c, t)| (c + (t - 0.5) * r).clamp(0.0, 1.0))
            .collect(),
        _ => base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_mapping_round_trips() {
        let s = SearchSpace::uniform(3, 1e-7, 1e-3, Scale::Log).unwrap();
        let x = vec![1e-7, 1e-5, 1e-3];
        let u = s.to_unit(&x);
        assert!((u[1] - 0.5).abs() < 1e-12);
        let back = s.from_unit(&u);
        for (a, b) in x.iter().zip(&back) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(SearchSpace::uniform(2, 1.0, 1.0, Scale::Linear).is_err());
        assert!(SearchSpace::uniform(2, 0.0, 1.0, Scale::Log).is_err());
        assert!(SearchSpace::new(vec![]).is_err());
    }

    #[test]
    fn trajectory_csv() {
        let r = OptResult {
            best_point: vec![0.0],
            best_value: 1.0,
            feasible: true,
            trajectory: vec![3.0, 1.0],
            n_evals: 2,
            wall_time_s: 0.0,
            first_feasible_eval: None,
        };
        let mut buf = Vec::new();
        r.write_trajectory_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("eval_index,best_value"));
        assert_eq!(text.lines().count(), 3);
    }
}
