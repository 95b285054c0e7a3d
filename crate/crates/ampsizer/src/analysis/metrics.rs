//! DC gain, unity-gain frequency, phase margin and stability.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{poles_zeros, AnalysisError, RationalTransferFunction};

pub const SCAN_MIN_HZ: f64 = 1.0;
pub const SCAN_MAX_HZ: f64 = 1e12;
const SCAN_POINTS_PER_DECADE: usize = 100;
const BISECTION_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcMetrics {
    pub dc_gain_db: f64,
    pub gbw_hz: f64,
    pub pm_deg: f64,
    /// rad/s
    pub poles: Vec<Complex64>,
    /// rad/s
    pub zeros: Vec<Complex64>,
    pub stable: bool,
}

/// Angle of `j*omega - r`, continuous in `omega` except when `r` sits on the
/// imaginary axis.
fn root_angle(omega: f64, r: Complex64) -> f64 {
    let dy = omega - r.im;
    if r.re < 0.0 {
        dy.atan2(-r.re)
    } else if r.re > 0.0 {
        PI - dy.atan2(r.re)
    } else if dy >= 0.0 {
        PI / 2.0
    } else {
        -PI / 2.0
    }
}

/// Continuous phase built from pole and zero angles.
pub(crate) struct PhaseModel<'a> {
    poles: &'a [Complex64],
    zeros: &'a [Complex64],
    dc_raw: f64,
    dc_phase: f64,
}

impl<'a> PhaseModel<'a> {
    pub(crate) fn new(tf: &RationalTransferFunction, poles: &'a [Complex64], zeros: &'a [Complex64]) -> Self {
        let mut m = PhaseModel {
            poles,
            zeros,
            dc_raw: 0.0,
            dc_phase: if tf.dc_gain() < 0.0 { PI } else { 0.0 },
        };
        m.dc_raw = m.raw(0.0);
        m
    }

    fn raw(&self, omega: f64) -> f64 {
        let z: f64 = self.zeros.iter().map(|&r| root_angle(omega, r)).sum();
        let p: f64 = self.poles.iter().map(|&r| root_angle(omega, r)).sum();
        z - p
    }

    /// Phase change since DC, radians.
    pub(crate) fn relative(&self, omega: f64) -> f64 {
        self.raw(omega) - self.dc_raw
    }

    /// Unwrapped absolute phase, radians, equal to `arg H(0)` at DC.
    pub(crate) fn absolute(&self, omega: f64) -> f64 {
        self.dc_phase + self.relative(omega)
    }
}

/// Unwrapped phase in degrees at each frequency (Hz).
pub fn phase_response(tf: &RationalTransferFunction, freqs_hz: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    let (poles, zeros) = poles_zeros(tf)?;
    let model = PhaseModel::new(tf, &poles, &zeros);
    Ok(freqs_hz
        .iter()
        .map(|f| model.absolute(2.0 * PI * f).to_degrees())
        .collect())
}

/// First frequency, scanning upward from 1 Hz, where `|H|` drops below 1.
fn unity_crossing(tf: &RationalTransferFunction) -> Option<f64> {
    let mag = |f: f64| tf.at_hz(f).norm();
    if mag(SCAN_MIN_HZ) < 1.0 {
        return None;
    }
    let decades = (SCAN_MAX_HZ / SCAN_MIN_HZ).log10().round() as usize;
    let steps = decades * SCAN_POINTS_PER_DECADE;
    let mut lo = SCAN_MIN_HZ;
    for i in 1..=steps {
        let hi = SCAN_MIN_HZ * 10f64.powf(i as f64 / SCAN_POINTS_PER_DECADE as f64);
        if mag(hi) < 1.0 {
            let mut hi = hi;
            while hi / lo - 1.0 > BISECTION_REL_TOL {
                let mid = (lo * hi).sqrt();
                if mag(mid) < 1.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some((lo * hi).sqrt());
        }
        lo = hi;
    }
    None
}

/// Computes gain, unity-gain frequency, phase margin and stability.
///
/// The phase is measured relative to its DC value, so a negative DC gain
/// does not offset the margin. It is unwrapped analytically from the pole
/// and zero angles, which cannot skip a cycle between scan points.
pub fn ac_metrics(tf: &RationalTransferFunction) -> Result<AcMetrics, AnalysisError> {
    let (poles, zeros) = poles_zeros(tf)?;
    let dc_gain_db = 20.0 * tf.dc_gain().abs().log10();
    if tf.dc_gain().abs() <= 1.0 {
        return Err(AnalysisError::NoCrossing { dc_gain_db });
    }
    let gbw_hz = unity_crossing(tf).ok_or(AnalysisError::NoCrossing { dc_gain_db })?;
    let model = PhaseModel::new(tf, &poles, &zeros);
    let pm_deg = 180.0 + model.relative(2.0 * PI * gbw_hz).to_degrees();
    let stable = poles.iter().all(|p| p.re < 0.0);
    Ok(AcMetrics {
        dc_gain_db,
        gbw_hz,
        pm_deg,
        poles,
        zeros,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pole() {
        let wp = 2.0 * PI * 100.0;
        let tf = RationalTransferFunction::new(vec![1000.0], vec![1.0, 1.0 / wp]).unwrap();
        let m = ac_metrics(&tf).unwrap();
        assert!((m.dc_gain_db - 60.0).abs() < 1e-9);
        assert!((m.gbw_hz - 100e3).abs() / 100e3 < 1e-3);
        assert!((m.pm_deg - 90.06).abs() < 0.01);
        assert!(m.stable);
    }

    #[test]
    fn second_pole_at_twice_gbw() {
        // Dominant pole at 1 Hz, p2 at 2 MHz, gain chosen so |H| = 1 at 1 MHz.
        let (f1, fu, f2): (f64, f64, f64) = (1.0, 1e6, 2e6);
        let a0 = (1.0 + (fu / f1).powi(2)).sqrt() * (1.0 + (fu / f2).powi(2)).sqrt();
        let (w1, w2) = (2.0 * PI * f1, 2.0 * PI * f2);
        let tf = RationalTransferFunction::new(
            vec![a0],
            vec![1.0, 1.0 / w1 + 1.0 / w2, 1.0 / (w1 * w2)],
        )
        .unwrap();
        let m = ac_metrics(&tf).unwrap();
        assert!((m.gbw_hz - fu).abs() / fu < 1e-6);
        let expected = 90.0 - 0.5f64.atan().to_degrees();
        assert!((m.pm_deg - expected).abs() < 0.2, "{}", m.pm_deg);
    }

    #[test]
    fn low_gain_has_no_crossing() {
        let tf = RationalTransferFunction::new(vec![0.5], vec![1.0, 1e-3]).unwrap();
        assert!(matches!(ac_metrics(&tf), Err(AnalysisError::NoCrossing { .. })));
    }

    #[test]
    fn rhp_zero_costs_phase() {
        let base = RationalTransferFunction::new(vec![1e4], vec![1.0, 1e-2, 1e-9]).unwrap();
        let rhp = RationalTransferFunction::new(vec![1e4, -1e4 / 1e7], vec![1.0, 1e-2, 1e-9]).unwrap();
        let a = ac_metrics(&base).unwrap();
        let b = ac_metrics(&rhp).unwrap();
        assert!(b.pm_deg < a.pm_deg);
        assert!(b.stable);
    }

    #[test]
    fn unstable_is_flagged() {
        let tf = RationalTransferFunction::new(vec![100.0], vec![1.0, -1e-3, 1e-8]).unwrap();
        let m = ac_metrics(&tf).unwrap();
        assert!(!m.stable);
    }
}
