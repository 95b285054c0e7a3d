//! Gaussian-process regression with an ARD Matérn-5/2 kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.236_067_977_499_79;
const LOG_LENGTHSCALE: [f64; 2] = [-5.298_317_366_548_036, std::f64::consts::LN_2]; // [ln 0.005, ln 2]
const LOG_SIGNAL_VAR: [f64; 2] = [-2.995_732_273_553_991, 2.995_732_273_553_991]; // [ln 0.05, ln 20]
const LOG_NOISE_VAR: [f64; 2] = [-13.815_510_557_964_274, -std::f64::consts::LN_10]; // [ln 1e-6, ln 0.1]
const MEAN: [f64; 2] = [-3.0, 3.0];
const FIT_JITTER: f64 = 1e-8;
const SAMPLE_JITTERS: [f64; 5] = [1e-8, 1e-6, 1e-4, 1e-3, 1e-2];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("covariance matrix is not positive definite even with jitter {jitter:e}")]
    Degenerate { jitter: f64 },
    #[error("need at least two training points, got {0}")]
    TooFewPoints(usize),
    #[error("training data contains non-finite values")]
    NonFinite,
}

/// Kernel and likelihood hyperparameters, in log space where positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparameters {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
    /// Constant mean on the standardized scale.
    pub mean: f64,
}

impl GpHyperparameters {
    fn default_for(dim: usize) -> Self {
        GpHyperparameters {
            log_lengthscales: vec![0.5f64.ln(); dim],
            log_signal_var: 0.0,
            log_noise_var: 1e-3f64.ln(),
            mean: 0.0,
        }
    }

    fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        GpHyperparameters {
            log_lengthscales: (0..dim).map(|_| rng.random_range(0.05f64.ln()..1.5f64.ln())).collect(),
            log_signal_var: rng.random_range(-1.0..1.0),
            log_noise_var: rng.random_range(1e-5f64.ln()..1e-2f64.ln()),
            mean: rng.random_range(-1.0..1.0),
        }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.extend([self.log_signal_var, self.log_noise_var, self.mean]);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 3;
        GpHyperparameters {
            log_lengthscales: v[..d].to_vec(),
            log_signal_var: v[d],
            log_noise_var: v[d + 1],
            mean: v[d + 2],
        }
    }

    fn clamp(v: &mut [f64]) {
        let d = v.len() - 3;
        for x in &mut v[..d] {
            *x = x.clamp(LOG_LENGTHSCALE[0], LOG_LENGTHSCALE[1]);
        }
        v[d] = v[d].clamp(LOG_SIGNAL_VAR[0], LOG_SIGNAL_VAR[1]);
        v[d + 1] = v[d + 1].clamp(LOG_NOISE_VAR[0], LOG_NOISE_VAR[1]);
        v[d + 2] = v[d + 2].clamp(MEAN[0], MEAN[1]);
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }
}

/// Fitting schedule for the marginal-likelihood ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSchedule {
    pub restarts: usize,
    pub steps: usize,
    pub learning_rate: f64,
}

fn matern52(r: f64, signal_var: f64) -> f64 {
    let a = SQRT5 * r;
    signal_var * (1.0 + a + a * a / 3.0) * (-a).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn covariance(x: &[Vec<f64>], ls: &[f64], signal_var: f64) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal_var;
        for j in 0..i {
            let v = matern52(scaled_dist(&x[i], &x[j], ls), signal_var);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Log marginal likelihood and its gradient with respect to the packed
/// hyperparameter vector.
fn log_likelihood(x: &[Vec<f64>], y: &DVector<f64>, theta: &[f64]) -> Option<(f64, Vec<f64>)> {
    let n = x.len();
    let d = theta.len() - 3;
    let h = GpHyperparameters::from_vec(theta);
    let ls = h.lengthscales();
    let sf2 = h.log_signal_var.exp();
    let sn2 = h.log_noise_var.exp();
    let kf = covariance(x, &ls, sf2);
    let mut k = kf.clone();
    for i in 0..n {
        k[(i, i)] += sn2 + FIT_JITTER;
    }
    let chol = Cholesky::new(k)?;
    let r = y.add_scalar(-h.mean);
    let alpha = chol.solve(&r);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let ll = -0.5 * r.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    if !ll.is_finite() {
        return None;
    }
    let w = &alpha * alpha.transpose() - chol.inverse();

    let mut grad = vec![0.0; d + 3];
    for p in 0..n {
        for q in 0..p {
            let rr = scaled_dist(&x[p], &x[q], &ls);
            let a = SQRT5 * rr;
            let g = sf2 * (5.0 / 3.0) * (1.0 + a) * (-a).exp();
            // each unordered pair stands for two symmetric entries, cancelling the 1/2
            let s = w[(p, q)] * g;
            for j in 0..d {
                grad[j] += s * ((x[p][j] - x[q][j]) / ls[j]).powi(2);
            }
        }
    }
    let mut tr_wk = 0.0;
    for p in 0..n {
        for q in 0..n {
            tr_wk += w[(p, q)] * kf[(p, q)];
        }
    }
    grad[d] = 0.5 * tr_wk;
    grad[d + 1] = 0.5 * sn2 * w.trace();
    grad[d + 2] = alpha.sum();
    Some((ll, grad))
}

/// A trained regression model over unit-cube inputs.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    hyper: GpHyperparameters,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    log_likelihood: f64,
}

impl GaussianProcess {
    /// Fits hyperparameters by multi-start Adam ascent on the marginal
    /// likelihood. `warm` seeds the first restart.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        schedule: FitSchedule,
        warm: Option<&GpHyperparameters>,
        seed: u64,
    ) -> Result<Self, SurrogateError> {
        let n = x.len();
        if n < 2 {
            return Err(SurrogateError::TooFewPoints(n));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite);
        }
        let dim = x[0].len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for restart in 0..schedule.restarts.max(1) {
            let start = match (restart, warm) {
                (0, Some(h)) if h.log_lengthscales.len() == dim => h.clone(),
                (0, _) => GpHyperparameters::default_for(dim),
                (1, Some(_)) => GpHyperparameters::default_for(dim),
                _ => GpHyperparameters::random(dim, &mut rng),
            };
            let mut theta = start.to_vec();
            GpHyperparameters::clamp(&mut theta);
            let mut m = vec![0.0; theta.len()];
            let mut v = vec![0.0; theta.len()];
            let (b1, b2, eps) = (0.9, 0.999, 1e-8);
            for step in 0..=schedule.steps {
                let Some((ll, grad)) = log_likelihood(x, &ys, &theta) else {
                    break;
                };
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    best = Some((ll, theta.clone()));
                }
                if step == schedule.steps {
                    break;
                }
                let t = (step + 1) as i32;
                for i in 0..theta.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let mh = m[i] / (1.0 - b1.powi(t));
                    let vh = v[i] / (1.0 - b2.powi(t));
                    theta[i] += schedule.learning_rate * mh / (vh.sqrt() + eps);
                }
                GpHyperparameters::clamp(&mut theta);
            }
        }
        let (ll, theta) = best.ok_or(SurrogateError::Degenerate { jitter: FIT_JITTER })?;
        let hyper = GpHyperparameters::from_vec(&theta);
        let ls = hyper.lengthscales();
        let mut k = covariance(x, &ls, hyper.log_signal_var.exp());
        for i in 0..n {
            k[(i, i)] += hyper.log_noise_var.exp() + FIT_JITTER;
        }
        let chol = Cholesky::new(k).ok_or(SurrogateError::Degenerate { jitter: FIT_JITTER })?;
        let alpha = chol.solve(&ys.add_scalar(-hyper.mean));
        Ok(GaussianProcess {
            x: x.to_vec(),
            hyper,
            chol,
            alpha,
            y_mean,
            y_std,
            log_likelihood: ll,
        })
    }

    pub fn hyperparameters(&self) -> &GpHyperparameters {
        &self.hyper
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    fn cross_covariance(&self, cand: &[Vec<f64>]) -> DMatrix<f64> {
        let ls = self.hyper.lengthscales();
        let sf2 = self.hyper.log_signal_var.exp();
        DMatrix::from_fn(self.x.len(), cand.len(), |i, j| {
            matern52(scaled_dist(&self.x[i], &cand[j], &ls), sf2)
        })
    }

    /// Posterior mean and variance on the original output scale.
    pub fn predict(&self, cand: &[Vec<f64>]) -> Vec<(f64, f64)> {
        let kxc = self.cross_covariance(cand);
        let mean = kxc.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kxc)
            .expect("Cholesky factor has a positive diagonal");
        let sf2 = self.hyper.log_signal_var.exp();
        (0..cand.len())
            .map(|j| {
                let var = (sf2 - v.column(j).norm_squared()).max(0.0);
                (
                    self.y_mean + self.y_std * (self.hyper.mean + mean[j]),
                    var * self.y_std * self.y_std,
                )
            })
            .collect()
    }

    /// Draws `n_samples` joint posterior samples over `cand`, on the original
    /// output scale. Jitter grows until the posterior covariance factors.
    pub fn sample_joint(
        &self,
        cand: &[Vec<f64>],
        n_samples: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<f64>>, SurrogateError> {
        let m = cand.len();
        let kxc = self.cross_covariance(cand);
        let mean = kxc.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kxc)
            .ok_or(SurrogateError::Degenerate { jitter: 0.0 })?;
        let ls = self.hyper.lengthscales();
        let sf2 = self.hyper.log_signal_var.exp();
        let prior = covariance(cand, &ls, sf2);
        let post = prior - v.transpose() * &v;
        let mut factor = None;
        for &j in &SAMPLE_JITTERS {
            let mut c = post.clone();
            for i in 0..m {
                c[(i, i)] += j * sf2;
            }
            if let Some(ch) = Cholesky::new(c) {
                factor = Some(ch.unpack());
                break;
            }
        }
        let l = factor.ok_or(SurrogateError::Degenerate {
            jitter: SAMPLE_JITTERS[SAMPLE_JITTERS.len() - 1],
        })?;
        Ok((0..n_samples)
            .map(|_| {
                let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let s = &mean + &l * z;
                s.iter()
                    .map(|v| self.y_mean + self.y_std * (self.hyper.mean + v))
                    .collect()
            })
            .collect())
    }
}
