//! Bode plot data.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::PhaseModel;
use super::{poles_zeros, AnalysisError, RationalTransferFunction};

pub const BODE_HEADER: &str = "freq_hz,mag_db,phase_deg";
pub const BODE_POINTS_PER_DECADE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub freq_hz: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
}

/// Log-spaced samples from `f_start` to `f_stop`, 50 per decade, both ends
/// included.
pub fn bode_points(
    tf: &RationalTransferFunction,
    f_start: f64,
    f_stop: f64,
) -> Result<Vec<BodePoint>, AnalysisError> {
    if !(f_start > 0.0 && f_stop > f_start && f_stop.is_finite()) {
        return Err(AnalysisError::InvalidTransferFunction(format!(
            "bad Bode range {f_start}..{f_stop}"
        )));
    }
    let (poles, zeros) = poles_zeros(tf)?;
    let model = PhaseModel::new(tf, &poles, &zeros);
    let steps = ((f_stop / f_start).log10() * BODE_POINTS_PER_DECADE as f64).round() as usize;
    let steps = steps.max(1);
    let ratio = (f_stop / f_start).ln() / steps as f64;
    Ok((0..=steps)
        .map(|i| {
            let f = if i == steps { f_stop } else { f_start * (ratio * i as f64).exp() };
            BodePoint {
                freq_hz: f,
                mag_db: 20.0 * tf.at_hz(f).norm().log10(),
                phase_deg: model.absolute(2.0 * PI * f).to_degrees(),
            }
        })
        .collect())
}

pub fn write_bode_csv(points: &[BodePoint], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{BODE_HEADER}")?;
    for p in points {
        writeln!(out, "{:e},{},{}", p.freq_hz, p.mag_db, p.phase_deg)?;
    }
    out.flush()
}

/// Writes a Bode CSV for `f_start..=f_stop`; returns the number of data rows.
pub fn bode_export(
    tf: &RationalTransferFunction,
    path: impl AsRef<Path>,
    f_start: f64,
    f_stop: f64,
) -> Result<usize, AnalysisError> {
    let points = bode_points(tf, f_start, f_stop)?;
    let file = File::create(path)?;
    write_bode_csv(&points, BufWriter::new(file))?;
    Ok(points.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_shape() {
        let tf = RationalTransferFunction::new(vec![1e3], vec![1.0, 1e-3]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bode.csv");
        let rows = bode_export(&tf, &path, 1.0, 1e6).unwrap();
        assert_eq!(rows, 6 * 50 + 1);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(BODE_HEADER));
        let freqs: Vec<f64> = lines
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(freqs.len(), rows);
        assert!(freqs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn phase_starts_at_zero_and_tends_to_minus_ninety() {
        let tf = RationalTransferFunction::new(vec![10.0], vec![1.0, 1e-3]).unwrap();
        let pts = bode_points(&tf, 1e-3, 1e9).unwrap();
        assert!(pts[0].phase_deg.abs() < 0.01);
        assert!((pts.last().unwrap().phase_deg + 90.0).abs() < 0.01);
    }
}
