//! Real-coefficient polynomial roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::AnalysisError;

/// Evaluates an ascending-coefficient polynomial at a complex point.
pub fn eval(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn eval_with_derivative(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Backward-error style residual `|p(z)| / sum |c_k| |z|^k`.
pub fn relative_residual(coeffs: &[f64], z: Complex64) -> f64 {
    let scale: f64 = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * z.norm().powi(k as i32))
        .sum();
    if scale == 0.0 {
        return 0.0;
    }
    eval(coeffs, z).norm() / scale
}

/// Removes trailing (highest-power) zeros.
pub fn trim(coeffs: &[f64]) -> &[f64] {
    let n = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
    &coeffs[..n]
}

/// All complex roots of `coeffs` (ascending powers).
///
/// The polynomial is first rescaled to `s = sigma * x` so that its extreme
/// coefficients balance, then the roots are taken as eigenvalues of the
/// companion matrix and each is refined by Newton steps on the scaled
/// polynomial.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>, AnalysisError> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(AnalysisError::Degenerate("non-finite coefficient".into()));
    }
    let c = trim(coeffs);
    if c.is_empty() {
        return Err(AnalysisError::Degenerate("zero polynomial".into()));
    }
    let at_origin = c.iter().position(|&x| x != 0.0).expect("nonzero exists");
    let c = &c[at_origin..];
    let mut out = vec![Complex64::new(0.0, 0.0); at_origin];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(out);
    }

    let sigma = (c[0].abs() / c[n].abs()).powf(1.0 / n as f64);
    let mut b: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(k, &ck)| ck * sigma.powi(k as i32))
        .collect();
    let norm = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    b.iter_mut().for_each(|v| *v /= norm);

    let scaled: Vec<Complex64>;
    if n == 1 {
        scaled = vec![Complex64::new(-b[0] / b[1], 0.0)];
    } else {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            m[(i, n - 1)] = -b[i] / b[n];
        }
        scaled = m.complex_eigenvalues().iter().copied().collect();
    }

    let bc: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for mut z in scaled {
        let mut best = relative_residual(&b, z);
        for _ in 0..3 {
            let (p, dp) = eval_with_derivative(&bc, z);
            if dp.norm() == 0.0 {
                break;
            }
            let cand = z - p / dp;
            let r = relative_residual(&b, cand);
            if !(r < best) {
                break;
            }
            z = cand;
            best = r;
        }
        if z.im.abs() <= 1e-14 * z.norm() {
            z.im = 0.0;
        }
        out.push(z * sigma);
    }
    Ok(out)
}

/// Expands `prod (s - r)` into real ascending coefficients (imaginary parts
/// of the product are discarded, so pass conjugate pairs together).
pub fn from_roots(roots: &[Complex64], leading: f64) -> Vec<f64> {
    let mut p = vec![Complex64::new(leading, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (k, &c) in p.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * r;
        }
        p = next;
    }
    p.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
        v
    }

    #[test]
    fn two_real_poles() {
        // (1 + s/10)(1 + s/1000)
        let r = sorted(roots(&[1.0, 1.0 / 10.0 + 1.0 / 1000.0, 1.0 / 10_000.0]).unwrap());
        assert!((r[0].re + 1000.0).abs() < 1e-6 * 1000.0);
        assert!((r[1].re + 10.0).abs() < 1e-6 * 10.0);
    }

    #[test]
    fn butterworth_pair() {
        let w0 = 100.0;
        let q = 1.0 / 2f64.sqrt();
        let r = roots(&[w0 * w0, w0 / q, 1.0]).unwrap();
        for z in r {
            assert!((z.norm() - 100.0).abs() < 1e-6 * 100.0);
            assert!((z.arg().abs().to_degrees() - 135.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_roots_and_constants() {
        assert!(roots(&[0.0, 0.0]).is_err());
        assert!(roots(&[3.0]).unwrap().is_empty());
        let r = roots(&[0.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.iter().any(|z| z.norm() == 0.0));
        assert!(r.iter().any(|z| (z.re + 2.0).abs() < 1e-12));
    }

    #[test]
    fn round_trip_wide_spread() {
        let truth = vec![
            Complex64::new(-1e2, 0.0),
            Complex64::new(-3e5, 4e5),
            Complex64::new(-3e5, -4e5),
            Complex64::new(-2e7, 0.0),
            Complex64::new(5e8, 0.0),
        ];
        let c = from_roots(&truth, 1.0);
        let got = roots(&c).unwrap();
        for t in &truth {
            let d = got.iter().map(|g| (g - t).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-6 * t.norm(), "{t} missed by {d}");
        }
    }
}
