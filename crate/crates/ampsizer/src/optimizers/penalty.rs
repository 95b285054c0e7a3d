//! Constraint handling for the supply-current objective.

use serde::{Deserialize, Serialize};

use crate::analysis::AcMetrics;
use crate::reasoning::DesignSpec;

pub const DEFAULT_PENALTY_WEIGHT: f64 = 1e3;

/// What an evaluation produced.
#[derive(Debug, Clone, Copy)]
pub enum Measurement<'a> {
    Metrics(&'a AcMetrics),
    /// The response never crosses unity gain.
    NoCrossing { dc_gain_db: f64 },
    /// Device or transfer-function evaluation failed.
    Failed,
}

/// Relative constraint violations, each zero when met.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Violations {
    pub gbw: f64,
    pub pm: f64,
    pub gain: f64,
    pub stability: f64,
}

impl Violations {
    pub fn is_feasible(&self) -> bool {
        self.gbw == 0.0 && self.pm == 0.0 && self.gain == 0.0 && self.stability == 0.0
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.gbw.powi(2) + self.pm.powi(2) + self.gain.powi(2) + self.stability.powi(2)
    }
}

fn shortfall(actual: f64, required: f64) -> f64 {
    if actual.is_nan() {
        return 1.0;
    }
    ((required - actual) / required).clamp(0.0, 1.0)
}

pub fn violations(spec: &DesignSpec, m: Measurement<'_>) -> Violations {
    match m {
        Measurement::Metrics(m) => Violations {
            gbw: shortfall(m.gbw_hz, spec.gbw_min),
            pm: shortfall(m.pm_deg, spec.pm_min),
            gain: shortfall(m.dc_gain_db, spec.gain_min),
            stability: if m.stable { 0.0 } else { 1.0 },
        },
        Measurement::NoCrossing { dc_gain_db } => Violations {
            gbw: 1.0,
            pm: 1.0,
            gain: shortfall(dc_gain_db, spec.gain_min),
            stability: 0.0,
        },
        Measurement::Failed => Violations {
            gbw: 1.0,
            pm: 1.0,
            gain: 1.0,
            stability: 1.0,
        },
    }
}

/// Scalar objective: `i_dd / i_dd_max` when every constraint holds,
/// otherwise `1 + i_dd / i_dd_max + weight * sum(violation^2)`.
///
/// Feasible values therefore never exceed 1 and infeasible values always do.
pub fn penalize(spec: &DesignSpec, m: Measurement<'_>, i_dd: f64, i_dd_max: f64, weight: f64) -> f64 {
    let current = if i_dd.is_finite() && i_dd >= 0.0 {
        (i_dd / i_dd_max).min(1.0)
    } else {
        1.0
    };
    let v = violations(spec, m);
    if v.is_feasible() {
        current
    } else {
        1.0 + current + weight * v.sum_of_squares()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DesignSpec {
        DesignSpec::new(10e-12, 1e6, 60.0, 80.0).unwrap()
    }

    fn metrics(gbw: f64, pm: f64, gain: f64) -> AcMetrics {
        AcMetrics {
            dc_gain_db: gain,
            gbw_hz: gbw,
            pm_deg: pm,
            poles: vec![],
            zeros: vec![],
            stable: true,
        }
    }

    #[test]
    fn feasible_value_is_normalized_current() {
        let m = metrics(2e6, 70.0, 90.0);
        let v = penalize(&spec(), Measurement::Metrics(&m), 1e-4, 1e-3, DEFAULT_PENALTY_WEIGHT);
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lower_current_wins_among_feasible() {
        let m = metrics(2e6, 70.0, 90.0);
        let a = penalize(&spec(), Measurement::Metrics(&m), 1e-4, 1e-3, DEFAULT_PENALTY_WEIGHT);
        let b = penalize(&spec(), Measurement::Metrics(&m), 2e-4, 1e-3, DEFAULT_PENALTY_WEIGHT);
        assert!(a < b);
    }

    #[test]
    fn feasible_beats_slight_violator_with_less_current() {
        let ok = metrics(1e6, 60.0, 80.0);
        let short = metrics(0.99e6, 60.0, 80.0);
        let a = penalize(&spec(), Measurement::Metrics(&ok), 9e-4, 1e-3, DEFAULT_PENALTY_WEIGHT);
        let b = penalize(&spec(), Measurement::Metrics(&short), 9e-5, 1e-3, DEFAULT_PENALTY_WEIGHT);
        assert!(a < b, "{a} vs {b}");
    }

    #[test]
    fn instability_is_penalized() {
        let mut m = metrics(2e6, 70.0, 90.0);
        m.stable = false;
        let v = violations(&spec(), Measurement::Metrics(&m));
        assert_eq!(v.stability, 1.0);
        assert!(penalize(&spec(), Measurement::Metrics(&m), 0.0, 1e-3, 1.0) > 1.0);
    }

    #[test]
    fn failures_rank_below_missing_crossings() {
        let nc = penalize(&spec(), Measurement::NoCrossing { dc_gain_db: 90.0 }, 1e-4, 1e-3, 1e3);
        let f = penalize(&spec(), Measurement::Failed, 1e-4, 1e-3, 1e3);
        assert!(nc < f);
    }
}
