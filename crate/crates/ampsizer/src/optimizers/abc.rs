//! Artificial bee colony.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{initial_point, OptResult, OptimizerError, RunOptions, SearchSpace, Tracker};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcConfig {
    /// Defaults to `max(10, 2 * dim)`.
    pub n_food_sources: Option<usize>,
    /// Trials without improvement before a source is abandoned; defaults to
    /// `n_food_sources * dim`.
    pub limit: Option<usize>,
}

fn fitness(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + f)
    } else {
        1.0 + f.abs()
    }
}

struct Colony {
    foods: Vec<Vec<f64>>,
    values: Vec<f64>,
    trials: Vec<usize>,
}

impl Colony {
    /// Moves one random coordinate of source `i` relative to another source
    /// and keeps the result if it is no worse.
    fn explore(&mut self, i: usize, rng: &mut ChaCha8Rng, tracker: &mut Tracker<'_>) -> bool {
        let n = self.foods.len();
        let d = self.foods[i].len();
        let j = rng.random_range(0..d);
        let mut k = rng.random_range(0..n - 1);
        if k >= i {
            k += 1;
        }
        let phi: f64 = rng.random_range(-1.0..=1.0);
        let mut v = self.foods[i].clone();
        v[j] = (v[j] + phi * (v[j] - self.foods[k][j])).clamp(0.0, 1.0);
        let Some(fv) = tracker.eval(&v) else {
            return false;
        };
        if fv <= self.values[i] {
            self.foods[i] = v;
            self.values[i] = fv;
            self.trials[i] = 0;
        } else {
            self.trials[i] += 1;
        }
        true
    }
}

/// Minimizes `objective` over `space` with the canonical employed, onlooker
/// and scout phases.
pub fn abc_optimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    space: &SearchSpace,
    opts: &RunOptions,
    cfg: &AbcConfig,
) -> Result<OptResult, OptimizerError> {
    let d = space.dim();
    let n_food = cfg.n_food_sources.unwrap_or((2 * d).max(10));
    let limit = cfg.limit.unwrap_or(n_food * d);
    if n_food < 2 {
        return Err(OptimizerError::Config("n_food_sources must be at least 2".into()));
    }
    if limit < 1 {
        return Err(OptimizerError::Config("limit must be at least 1".into()));
    }
    if opts.budget < n_food {
        return Err(OptimizerError::Budget {
            budget: opts.budget,
            required: n_food,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let warm_u = opts.warm_start.as_ref().map(|w| space.to_unit(w));
    let mut tracker = Tracker::new(objective, space, opts);

    let mut colony = Colony {
        foods: Vec::with_capacity(n_food),
        values: Vec::with_capacity(n_food),
        trials: vec![0; n_food],
    };
    for i in 0..n_food {
        let base: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let x = initial_point(i, base, warm_u.as_deref(), opts.init_radius);
        let Some(v) = tracker.eval(&x) else {
            return Ok(tracker.finish());
        };
        colony.foods.push(x);
        colony.values.push(v);
    }

    'outer: while !tracker.done() {
        for i in 0..n_food {
            if !colony.explore(i, &mut rng, &mut tracker) {
                break 'outer;
            }
        }

        let fit: Vec<f64> = colony.values.iter().map(|&v| fitness(v)).collect();
        let total: f64 = fit.iter().sum();
        let mut placed = 0;
        let mut i = 0;
        while placed < n_food {
            let p = fit[i] / total;
            if rng.random::<f64>() < p {
                if !colony.explore(i, &mut rng, &mut tracker) {
                    break 'outer;
                }
                placed += 1;
            }
            i = (i + 1) % n_food;
        }

        let (worst, &trials) = colony
            .trials
            .iter()
            .enumerate()
            .max_by_key(|&(_, t)| *t)
            .expect("non-empty colony");
        if trials > limit {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let Some(v) = tracker.eval(&x) else {
                break;
            };
            colony.foods[worst] = x;
            colony.values[worst] = v;
            colony.trials[worst] = 0;
        }
    }
    Ok(tracker.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::Scale;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn constant_objective_gives_flat_trajectory() {
        let space = SearchSpace::uniform(3, -1.0, 1.0, Scale::Linear).unwrap();
        let r = abc_optimize(&mut |_| 4.5, &space, &RunOptions::new(200, 1), &AbcConfig::default()).unwrap();
        assert_eq!(r.best_value, 4.5);
        assert_eq!(r.n_evals, 200);
        assert!(r.trajectory.iter().all(|&v| v == 4.5));
    }

    #[test]
    fn budget_below_population_is_rejected() {
        let space = SearchSpace::uniform(2, -1.0, 1.0, Scale::Linear).unwrap();
        let e = abc_optimize(&mut sphere, &space, &RunOptions::new(5, 0), &AbcConfig::default());
        assert!(matches!(e, Err(OptimizerError::Budget { required: 10, .. })));
    }

    #[test]
    fn warm_start_is_evaluated_first() {
        let space = SearchSpace::uniform(2, -5.0, 5.0, Scale::Linear).unwrap();
        let mut first = None;
        let mut obj = |x: &[f64]| {
            first.get_or_insert_with(|| x.to_vec());
            sphere(x)
        };
        let opts = RunOptions {
            warm_start: Some(vec![1.0, -2.0]),
            ..RunOptions::new(20, 3)
        };
        abc_optimize(&mut obj, &space, &opts, &AbcConfig::default()).unwrap();
        let f = first.unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12 && (f[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn stops_at_first_feasible_when_asked() {
        let space = SearchSpace::uniform(2, -5.0, 5.0, Scale::Linear).unwrap();
        let opts = RunOptions {
            feasibility_threshold: Some(1.0),
            stop_when_feasible: true,
            ..RunOptions::new(2000, 0)
        };
        let r = abc_optimize(&mut sphere, &space, &opts, &AbcConfig::default()).unwrap();
        assert!(r.feasible);
        assert_eq!(Some(r.n_evals), r.first_feasible_eval);
    }
}
