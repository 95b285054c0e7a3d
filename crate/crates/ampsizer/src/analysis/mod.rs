//! Frequency-domain analysis: transfer-function assembly, poles and zeros,
//! unity-gain frequency, phase margin and Bode data.

mod bode;
mod metrics;
pub mod poly;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::device::{symbol_values, SmallSignalParams};
use crate::kb::TopologyDescriptor;

pub use bode::{bode_export, bode_points, write_bode_csv, BodePoint, BODE_HEADER, BODE_POINTS_PER_DECADE};
pub use metrics::{ac_metrics, phase_response, AcMetrics, SCAN_MAX_HZ, SCAN_MIN_HZ};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("non-finite {polynomial}[{index}] coefficient ({detail})")]
    Eval {
        polynomial: &'static str,
        index: usize,
        detail: String,
    },
    #[error("binding error: {0}")]
    Binding(String),
    #[error("degenerate polynomial: {0}")]
    Degenerate(String),
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error("no unity-gain crossing between 1 Hz and 1 THz (DC gain {dc_gain_db:.2} dB)")]
    NoCrossing { dc_gain_db: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `H(s) = sum num[k] s^k / sum den[k] s^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl RationalTransferFunction {
    /// Strips trailing zeros and checks `den[0] != 0`, `deg num <= deg den`.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, AnalysisError> {
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(AnalysisError::InvalidTransferFunction("non-finite coefficient".into()));
        }
        let num = poly::trim(&num).to_vec();
        let den = poly::trim(&den).to_vec();
        if num.is_empty() {
            return Err(AnalysisError::InvalidTransferFunction("zero numerator".into()));
        }
        if den.first().is_none_or(|&d| d == 0.0) {
            return Err(AnalysisError::InvalidTransferFunction(
                "denominator constant term is zero".into(),
            ));
        }
        if num.len() > den.len() {
            return Err(AnalysisError::InvalidTransferFunction(
                "numerator degree exceeds denominator degree".into(),
            ));
        }
        Ok(RationalTransferFunction { num, den })
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Response at `f` hertz.
    pub fn at_hz(&self, f: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, 2.0 * std::f64::consts::PI * f))
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn scaled(&self, k: f64) -> Result<Self, AnalysisError> {
        Self::new(
            self.num.iter().map(|c| c * k).collect(),
            self.den.iter().map(|c| c * k).collect(),
        )
    }
}

/// Poles and zeros in rad/s.
pub fn poles_zeros(
    tf: &RationalTransferFunction,
) -> Result<(Vec<Complex64>, Vec<Complex64>), AnalysisError> {
    Ok((poly::roots(tf.den())?, poly::roots(tf.num())?))
}

/// Evaluates the descriptor's coefficient expressions at `ssp` with load `cl`.
pub fn assemble_tf(
    desc: &TopologyDescriptor,
    ssp: &SmallSignalParams,
    cl: f64,
) -> Result<RationalTransferFunction, AnalysisError> {
    if !(cl.is_finite() && cl > 0.0) {
        return Err(AnalysisError::InvalidTransferFunction(format!("load capacitance {cl}")));
    }
    let values = symbol_values(desc, ssp, cl).map_err(|e| AnalysisError::Binding(e.to_string()))?;
    assemble_from_values(desc, &values)
}

/// Like [`assemble_tf`] with a symbol-table-ordered value vector.
pub fn assemble_from_values(
    desc: &TopologyDescriptor,
    values: &[f64],
) -> Result<RationalTransferFunction, AnalysisError> {
    let eval = |label: &'static str, coeffs: &[crate::kb::expr::ProductSum]| {
        coeffs
            .iter()
            .enumerate()
            .map(|(index, c)| {
                let v = c.eval(values);
                if v.is_finite() {
                    Ok(v)
                } else {
                    let mut syms: Vec<usize> = c.symbols().collect();
                    syms.sort_unstable();
                    syms.dedup();
                    let detail = syms
                        .iter()
                        .map(|&s| format!("{}={}", desc.symbols().name(s), values[s]))
                        .collect::<Vec<_>>()
                        .join(", ");
                    Err(AnalysisError::Eval {
                        polynomial: label,
                        index,
                        detail,
                    })
                }
            })
            .collect::<Result<Vec<f64>, _>>()
    };
    let num = eval("numerator", desc.numerator())?;
    let den = eval("denominator", desc.denominator())?;
    RationalTransferFunction::new(num, den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{evaluate_devices, Binding, ProcessProfile};
    use crate::kb::catalog;

    #[test]
    fn rejects_bad_shapes() {
        assert!(RationalTransferFunction::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(RationalTransferFunction::new(vec![1.0, 1.0, 1.0], vec![1.0, 1.0]).is_err());
        let tf = RationalTransferFunction::new(vec![2.0, 0.0], vec![1.0, 3.0, 0.0]).unwrap();
        assert_eq!(tf.num(), &[2.0]);
        assert_eq!(tf.den(), &[1.0, 3.0]);
    }

    #[test]
    fn builtins_assemble_at_mid_bounds() {
        let profile = ProcessProfile::default();
        for desc in catalog() {
            let binding = Binding::new(&desc);
            let ssp = evaluate_devices(&binding.mid_bounds(&profile.bounds), &profile, &binding).unwrap();
            let tf = assemble_tf(&desc, &ssp, 20e-12).unwrap();
            assert!(tf.num().len() <= tf.den().len(), "{}", desc.name());
            assert!(tf.num().iter().chain(tf.den()).all(|c| c.is_finite()));
        }
    }
}
