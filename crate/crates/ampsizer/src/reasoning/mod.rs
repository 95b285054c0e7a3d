//! Design-target derivation.
//!
//! Turns a [`DesignSpec`] into numeric targets for every design variable of
//! a topology by placing the non-dominant poles as a damped complex pair
//! above the unity-gain frequency, then splits the targets into per-stage
//! sub-problems.

mod solve;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisError;
use crate::device::SmallSignalParams;
use crate::kb::{TopologyDescriptor, VariableKind, VariableRole, GLOBAL_STAGE};

pub use solve::{solve_targets, solve_targets_with_resistances};

/// Minimum-current design request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Load capacitance (F).
    pub cl: f64,
    /// Minimum unity-gain frequency (Hz).
    pub gbw_min: f64,
    /// Minimum phase margin (degrees).
    pub pm_min: f64,
    /// Minimum DC gain (dB).
    pub gain_min: f64,
}

impl DesignSpec {
    pub fn new(cl: f64, gbw_min: f64, pm_min: f64, gain_min: f64) -> Result<Self, ReasoningError> {
        let s = DesignSpec {
            cl,
            gbw_min,
            pm_min,
            gain_min,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ReasoningError> {
        for (name, v) in [("cl", self.cl), ("gbw_min", self.gbw_min), ("gain_min", self.gain_min)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ReasoningError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pm_min > 0.0 && self.pm_min < 90.0) {
            return Err(ReasoningError::InvalidSpec(format!(
                "pm_min must lie in (0, 90) degrees, got {}",
                self.pm_min
            )));
        }
        Ok(())
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CL={:.3e} F, GBW>={:.3e} Hz, PM>={} deg, gain>={} dB",
            self.cl, self.gbw_min, self.pm_min, self.gain_min
        )
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasoningConfig {
    /// Quality factor of the non-dominant pair.
    pub pair_q: f64,
    /// Initial ratio of the pair's natural frequency to the unity-gain frequency.
    pub separation_factor: f64,
    /// Multiplier applied to the separation factor on each retry.
    pub separation_growth: f64,
    pub max_retries: u32,
    /// The unity-gain frequency is designed at `gbw_min * gbw_margin`.
    pub gbw_margin: f64,
    /// Relative tolerance band attached to every target.
    pub tolerance: f64,
    /// Compensation capacitors are fixed at `cap_ratio * C_L` before solving.
    pub cap_ratio: f64,
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    /// Extra DC gain assumed when estimating output resistances.
    pub gain_margin_db: f64,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        ReasoningConfig {
            pair_q: std::f64::consts::FRAC_1_SQRT_2,
            separation_factor: 2.0,
            separation_growth: 1.25,
            max_retries: 8,
            gbw_margin: 1.1,
            tolerance: 0.05,
            cap_ratio: 0.1,
            newton_max_iter: 100,
            newton_tol: 1e-10,
            gain_margin_db: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub value: f64,
    /// Relative half-width of the acceptance band.
    pub tolerance: f64,
}

impl Target {
    pub fn relative_error(&self, actual: f64) -> f64 {
        (actual / self.value - 1.0).abs()
    }

    pub fn accepts(&self, actual: f64) -> bool {
        self.relative_error(actual) <= self.tolerance
    }
}

/// Metrics of the transfer function assembled at the targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedMetrics {
    pub dc_gain_db: f64,
    pub gbw_hz: f64,
    pub pm_deg: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedTargets {
    pub topology: String,
    pub spec: DesignSpec,
    /// Design variable targets keyed by symbol.
    pub targets: BTreeMap<String, Target>,
    /// Output resistances assumed when verifying the targets.
    pub assumed_output_resistance: BTreeMap<String, f64>,
    /// Unity-gain frequency the relations were solved for (Hz).
    pub gbw_target_hz: f64,
    /// Lowest-frequency pole of the verified response (Hz).
    pub dominant_pole_hz: f64,
    /// Natural frequency of the non-dominant pair (rad/s).
    pub pair_omega0: f64,
    pub pair_q: f64,
    pub separation_factor: f64,
    pub retries: u32,
    pub predicted: PredictedMetrics,
}

impl DerivedTargets {
    pub fn target(&self, symbol: &str) -> Option<Target> {
        self.targets.get(symbol).copied()
    }

    /// True when every target accepts the corresponding value of `ssp`.
    pub fn is_met_by(&self, ssp: &SmallSignalParams) -> bool {
        self.targets
            .iter()
            .all(|(s, t)| ssp.get(s).is_some_and(|v| t.accepts(v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnedTarget {
    pub symbol: String,
    pub kind: VariableKind,
    pub target: Target,
}

/// Target-matching task for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProblem {
    pub stage: String,
    pub label: String,
    pub owned: Vec<OwnedTarget>,
}

impl SubProblem {
    /// Relative error of each owned variable, in `owned` order.
    pub fn residuals(&self, ssp: &SmallSignalParams) -> Vec<f64> {
        self.owned
            .iter()
            .map(|o| o.target.relative_error(ssp.get(&o.symbol).unwrap_or(f64::NAN)))
            .collect()
    }

    /// Largest relative error over owned variables.
    pub fn max_residual(&self, ssp: &SmallSignalParams) -> f64 {
        self.residuals(ssp)
            .into_iter()
            .fold(0.0, |m, r| if r.is_nan() { f64::INFINITY } else { m.max(r) })
    }

    pub fn is_complete(&self, ssp: &SmallSignalParams) -> bool {
        self.owned
            .iter()
            .all(|o| ssp.get(&o.symbol).is_some_and(|v| o.target.accepts(v)))
    }
}

/// One sub-problem per descriptor stage, in declaration order.
pub fn decompose(targets: &DerivedTargets, desc: &TopologyDescriptor) -> Vec<SubProblem> {
    desc.stages()
        .iter()
        .filter_map(|st| {
            let owned: Vec<OwnedTarget> = desc
                .variables()
                .iter()
                .filter(|v| v.stage == st.id && v.stage != GLOBAL_STAGE && v.role == VariableRole::Design)
                .filter_map(|v| {
                    targets.target(&v.symbol).map(|t| OwnedTarget {
                        symbol: v.symbol.clone(),
                        kind: v.kind,
                        target: t,
                    })
                })
                .collect();
            (!owned.is_empty()).then(|| SubProblem {
                stage: st.id.clone(),
                label: st.label.clone(),
                owned,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibleReason {
    /// The solved value of `symbol` lies outside its bounds.
    Bound {
        symbol: String,
        value: f64,
        limit: f64,
        side: BoundSide,
    },
    /// An inequality relation does not hold at the solution.
    Relation { label: String, value: f64 },
    /// Retries ran out before the verified response met the spec.
    Shortfall {
        gbw_hz: f64,
        pm_deg: f64,
        separation_factor: f64,
    },
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfeasibleReason::Bound {
                symbol,
                value,
                limit,
                side,
            } => write!(
                f,
                "{symbol} = {value:.4e} violates its {} bound {limit:.4e}",
                match side {
                    BoundSide::Lower => "lower",
                    BoundSide::Upper => "upper",
                }
            ),
            InfeasibleReason::Relation { label, value } => {
                write!(f, "relation '{label}' fails (value {value:.3e})")
            }
            InfeasibleReason::Shortfall {
                gbw_hz,
                pm_deg,
                separation_factor,
            } => write!(
                f,
                "verified response GBW {gbw_hz:.4e} Hz, PM {pm_deg:.2} deg still short at separation {separation_factor:.3}"
            ),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReasoningError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible: {0}")]
    Infeasible(InfeasibleReason),
    #[error("design-equation solve did not converge (residual history {residual_history:?})")]
    Solver { residual_history: Vec<f64> },
    #[error("verification failed: {0}")]
    Analysis(#[from] AnalysisError),
}
