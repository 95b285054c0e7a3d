//! Trust-region Bayesian optimization with one or more regions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{FitSchedule, GaussianProcess, GpHyperparameters};
use super::{initial_point, OptResult, OptimizerError, RunOptions, SearchSpace, Tracker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurboConfig {
    pub n_trust_regions: usize,
    pub batch_size: usize,
    /// Initial design size per region; defaults to
    /// `min(2 * dim, max(2, budget / (2 * regions)))`.
    pub n_init: Option<usize>,
    pub length_init: f64,
    pub length_min: f64,
    pub length_max: f64,
    pub success_tolerance: usize,
    /// Defaults to `ceil(dim / batch_size)`.
    pub failure_tolerance: Option<usize>,
    /// Defaults to `min(max(100, 20 * dim), 300)`.
    pub n_candidates: Option<usize>,
    /// Nearest points to the region center used to train the surrogate.
    pub max_gp_points: usize,
    pub gp_restarts: usize,
    pub gp_steps: usize,
    pub gp_learning_rate: f64,
}

impl Default for TurboConfig {
    fn default() -> Self {
        TurboConfig {
            n_trust_regions: 1,
            batch_size: 1,
            n_init: None,
            length_init: 0.8,
            length_min: 0.5f64.powi(7),
            length_max: 1.6,
            success_tolerance: 3,
            failure_tolerance: None,
            n_candidates: None,
            max_gp_points: 64,
            gp_restarts: 5,
            gp_steps: 25,
            gp_learning_rate: 0.1,
        }
    }
}

impl TurboConfig {
    pub fn initial_design_size(&self, dim: usize, budget: usize) -> usize {
        self.n_init
            .unwrap_or_else(|| (2 * dim).min((budget / (2 * self.n_trust_regions.max(1))).max(2)))
    }
}

struct Region {
    length: f64,
    successes: usize,
    failures: usize,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    hyper: Option<GpHyperparameters>,
}

impl Region {
    fn new(length: f64) -> Self {
        Region {
            length,
            successes: 0,
            failures: 0,
            x: Vec::new(),
            y: Vec::new(),
            hyper: None,
        }
    }

    fn best(&self) -> Option<(usize, f64)> {
        self.y
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Records a batch result and resizes the region.
    fn update(&mut self, batch_best: f64, previous_best: f64, cfg: &TurboConfig, failure_tolerance: usize) {
        if batch_best < previous_best - 1e-3 * previous_best.abs() {
            self.successes += 1;
            self.failures = 0;
        } else {
            self.successes = 0;
            self.failures += 1;
        }
        if self.successes >= cfg.success_tolerance {
            self.length = (2.0 * self.length).min(cfg.length_max);
            self.successes = 0;
        } else if self.failures >= failure_tolerance {
            self.length /= 2.0;
            self.failures = 0;
        }
    }
}

fn latin_hypercube(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for j in 0..d {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[j] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Training subset: the points nearest the incumbent.
fn training_set(region: &Region, cap: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if region.x.len() <= cap {
        return (region.x.clone(), region.y.clone());
    }
    let (c, _) = region.best().expect("non-empty region");
    let center = &region.x[c];
    let mut idx: Vec<(f64, usize)> = region
        .x
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    idx.truncate(cap);
    (
        idx.iter().map(|&(_, i)| region.x[i].clone()).collect(),
        idx.iter().map(|&(_, i)| region.y[i]).collect(),
    )
}

/// Perturbed copies of the center inside the lengthscale-weighted box.
fn candidates(center: &[f64], lengthscales: &[f64], length: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let d = center.len();
    let geo = lengthscales.iter().map(|l| l.ln()).sum::<f64>() / d as f64;
    let half: Vec<f64> = lengthscales
        .iter()
        .map(|l| 0.5 * length * l / geo.exp())
        .collect();
    let p_perturb = (20.0 / d as f64).min(1.0);
    (0..n)
        .map(|_| {
            let mut mask: Vec<bool> = (0..d).map(|_| rng.random::<f64>() < p_perturb).collect();
            if !mask.iter().any(|&m| m) {
                mask[rng.random_range(0..d)] = true;
            }
            (0..d)
                .map(|j| {
                    if mask[j] {
                        let lo = (center[j] - half[j]).max(0.0);
                        let hi = (center[j] + half[j]).min(1.0);
                        lo + (hi - lo) * rng.random::<f64>()
                    } else {
                        center[j]
                    }
                })
                .collect()
        })
        .collect()
}

struct Proposal {
    sample: f64,
    region: usize,
    point: Vec<f64>,
}

/// Minimizes `objective` with `cfg.n_trust_regions` trust regions.
pub fn turbo_optimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    space: &SearchSpace,
    opts: &RunOptions,
    cfg: &TurboConfig,
) -> Result<OptResult, OptimizerError> {
    let d = space.dim();
    let m = cfg.n_trust_regions;
    if m == 0 || cfg.batch_size == 0 {
        return Err(OptimizerError::Config(
            "n_trust_regions and batch_size must be at least 1".into(),
        ));
    }
    if !(cfg.length_min > 0.0 && cfg.length_min <= cfg.length_init && cfg.length_init <= cfg.length_max) {
        return Err(OptimizerError::Config(
            "need 0 < length_min <= length_init <= length_max".into(),
        ));
    }
    let n_init = cfg.initial_design_size(d, opts.budget);
    if n_init < 1 {
        return Err(OptimizerError::Config("n_init must be at least 1".into()));
    }
    if opts.budget < m * n_init {
        return Err(OptimizerError::Budget {
            budget: opts.budget,
            required: m * n_init,
        });
    }
    let failure_tolerance = cfg
        .failure_tolerance
        .unwrap_or_else(|| d.div_ceil(cfg.batch_size))
        .max(1);
    let n_cand = cfg.n_candidates.unwrap_or((20 * d).clamp(100, 300));
    let schedule = FitSchedule {
        restarts: cfg.gp_restarts,
        steps: cfg.gp_steps,
        learning_rate: cfg.gp_learning_rate,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let warm_u = opts.warm_start.as_ref().map(|w| space.to_unit(w));
    let mut tracker = Tracker::new(objective, space, opts);
    let mut regions: Vec<Region> = (0..m).map(|_| Region::new(cfg.length_init)).collect();
    let mut fresh = vec![true; m];

    while !tracker.done() {
        for r in 0..m {
            if !fresh[r] || tracker.done() {
                continue;
            }
            fresh[r] = false;
            let first_start = r == 0 && regions[r].x.is_empty() && warm_u.is_some();
            regions[r] = Region::new(cfg.length_init);
            let design = latin_hypercube(n_init, d, &mut rng);
            for (i, base) in design.into_iter().enumerate() {
                let u = if first_start {
                    initial_point(i, base, warm_u.as_deref(), opts.init_radius)
                } else {
                    base
                };
                let Some(y) = tracker.eval(&u) else { break };
                regions[r].x.push(u);
                regions[r].y.push(y);
            }
        }
        if tracker.done() {
            break;
        }

        let mut proposals: Vec<Proposal> = Vec::new();
        for r in 0..m {
            let region = &mut regions[r];
            if region.x.len() < 2 {
                fresh[r] = true;
                continue;
            }
            let (tx, ty) = training_set(region, cfg.max_gp_points);
            let gp = match GaussianProcess::fit(&tx, &ty, schedule, region.hyper.as_ref(), rng.random()) {
                Ok(gp) => gp,
                Err(_) => {
                    fresh[r] = true;
                    continue;
                }
            };
            region.hyper = Some(gp.hyperparameters().clone());
            let (c, _) = region.best().expect("non-empty region");
            let cand = candidates(&region.x[c], &gp.hyperparameters().lengthscales(), region.length, n_cand, &mut rng);
            let samples = match gp.sample_joint(&cand, cfg.batch_size, &mut rng) {
                Ok(s) => s,
                Err(_) => {
                    fresh[r] = true;
                    continue;
                }
            };
            let mut taken = vec![false; cand.len()];
            for s in samples {
                let best = (0..cand.len())
                    .filter(|&i| !taken[i])
                    .min_by(|&a, &b| s[a].total_cmp(&s[b]));
                if let Some(i) = best {
                    taken[i] = true;
                    proposals.push(Proposal {
                        sample: s[i],
                        region: r,
                        point: cand[i].clone(),
                    });
                }
            }
        }
        if proposals.is_empty() {
            continue;
        }
        proposals.sort_by(|a, b| a.sample.total_cmp(&b.sample).then(a.region.cmp(&b.region)));
        proposals.truncate(cfg.batch_size);

        let previous: Vec<f64> = regions
            .iter()
            .map(|r| r.best().map_or(f64::INFINITY, |b| b.1))
            .collect();
        let mut batch_best = vec![f64::INFINITY; m];
        let mut touched = vec![false; m];
        for p in proposals {
            let Some(y) = tracker.eval(&p.point) else { break };
            let region = &mut regions[p.region];
            region.x.push(p.point);
            region.y.push(y);
            batch_best[p.region] = batch_best[p.region].min(y);
            touched[p.region] = true;
        }
        for r in 0..m {
            if touched[r] {
                regions[r].update(batch_best[r], previous[r], cfg, failure_tolerance);
                if regions[r].length < cfg.length_min {
                    fresh[r] = true;
                }
            }
        }
    }
    Ok(tracker.finish())
}

/// Single-region variant.
pub fn turbo1(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    space: &SearchSpace,
    opts: &RunOptions,
    cfg: &TurboConfig,
) -> Result<OptResult, OptimizerError> {
    turbo_optimize(
        objective,
        space,
        opts,
        &TurboConfig {
            n_trust_regions: 1,
            ..cfg.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Scale;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn latin_hypercube_stratifies_each_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = latin_hypercube(8, 3, &mut rng);
        for j in 0..3 {
            let mut bins: Vec<usize> = pts.iter().map(|p| (p[j] * 8.0) as usize).collect();
            bins.sort_unstable();
            assert_eq!(bins, (0..8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn five_regions_need_five_initial_designs() {
        let space = SearchSpace::uniform(4, -1.0, 1.0, Scale::Linear).unwrap();
        let cfg = TurboConfig {
            n_trust_regions: 5,
            n_init: Some(8),
            ..TurboConfig::default()
        };
        let e = turbo_optimize(&mut sphere, &space, &RunOptions::new(39, 0), &cfg);
        assert!(matches!(e, Err(OptimizerError::Budget { required: 40, .. })));
    }

    #[test]
    fn trajectory_contract_holds() {
        let space = SearchSpace::uniform(3, -2.0, 2.0, Scale::Linear).unwrap();
        let cfg = TurboConfig {
            n_trust_regions: 2,
            ..TurboConfig::default()
        };
        let r = turbo_optimize(&mut sphere, &space, &RunOptions::new(40, 1), &cfg).unwrap();
        assert_eq!(r.n_evals, 40);
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn one_region_matches_turbo1() {
        let space = SearchSpace::uniform(3, -2.0, 2.0, Scale::Linear).unwrap();
        let opts = RunOptions::new(30, 7);
        let a = turbo1(&mut sphere, &space, &opts, &TurboConfig::default()).unwrap();
        let b = turbo_optimize(&mut sphere, &space, &opts, &TurboConfig::default()).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.best_point, b.best_point);
    }

    #[test]
    fn region_resizing() {
        let cfg = TurboConfig::default();
        let mut r = Region::new(0.8);
        for _ in 0..3 {
            r.update(0.5, 1.0, &cfg, 2);
        }
        assert_eq!(r.length, 1.6);
        r.update(1.0, 1.0, &cfg, 2);
        r.update(1.0, 1.0, &cfg, 2);
        assert_eq!(r.length, 0.8);
    }
}
