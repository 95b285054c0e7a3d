use ampsizer::analysis::poles_zeros;
use ampsizer::bench::{sample_specs, SpecRange};
use ampsizer::device::{transconductance, Polarity, Transistor};
use ampsizer::kb::CacheKey;
use ampsizer::optimizers::{AbcConfig, Dimension, Measurement, RunOptions, Scale, TurboConfig};
use ampsizer::{
    abc_optimize, ac_metrics, estimate_wl, penalize, turbo_optimize, DesignSpec, ProcessProfile, RationalTransferFunction,
    ReasoningConfig, SearchSpace,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec() -> DesignSpec {
    DesignSpec::new(50e-12, 5e6, 60.0, 100.0).unwrap()
}

fn metrics(gbw: f64, pm: f64, gain: f64) -> ampsizer::AcMetrics {
    ampsizer::AcMetrics {
        dc_gain_db: gain,
        gbw_hz: gbw,
        pm_deg: pm,
        poles: Vec::new(),
        zeros: Vec::new(),
        stable: true,
    }
}

fn space(scales: &[(f64, f64, bool)]) -> SearchSpace {
    SearchSpace::new(
        scales
            .iter()
            .enumerate()
            .map(|(i, &(lo, width, log))| Dimension {
                name: format!("x{i}"),
                lower: lo,
                upper: lo + width,
                scale: if log { Scale::Log } else { Scale::Linear },
            })
            .collect(),
    )
    .unwrap()
}

fn dims() -> impl Strategy<Value = Vec<(f64, f64, bool)>> {
    prop::collection::vec((1e-6f64..1e3, 1e-3f64..1e4, any::<bool>()), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_cube_round_trip(d in dims(), seed in any::<u64>()) {
        let s = space(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..s.dim()).map(|_| rand::Rng::random_range(&mut rng, 0.0..=1.0)).collect();
        let x = s.from_unit(&u);
        prop_assert!(s.contains(&x));
        for (a, b) in s.to_unit(&x).iter().zip(&u) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn feasible_beats_any_infeasible(
        i_feasible in 0.0f64..1e-3,
        i_infeasible in 0.0f64..1e-3,
        gbw_short in 1e-4f64..0.5,
        pm_short in 0.0f64..0.5,
    ) {
        let s = spec();
        let i_max = 1e-3;
        let good = metrics(s.gbw_min * 1.1, 70.0, 110.0);
        let bad = metrics(s.gbw_min * (1.0 - gbw_short), 60.0 * (1.0 - pm_short), 110.0);
        let f = penalize(&s, Measurement::Metrics(&good), i_feasible, i_max, 1e3);
        let g = penalize(&s, Measurement::Metrics(&bad), i_infeasible, i_max, 1e3);
        prop_assert!((f - i_feasible / i_max).abs() < 1e-12);
        prop_assert!(f <= 1.0 && g > 1.0 && f < g);
        prop_assert!(penalize(&s, Measurement::Failed, i_infeasible, i_max, 1e3) > f);
        let none = penalize(&s, Measurement::NoCrossing { dc_gain_db: 110.0 }, i_infeasible, i_max, 1e3);
        prop_assert!(none > f);
    }

    #[test]
    fn feasible_designs_order_by_current(a in 1e-7f64..1e-3, b in 1e-7f64..1e-3) {
        let s = spec();
        let m = metrics(6e6, 65.0, 120.0);
        let pa = penalize(&s, Measurement::Metrics(&m), a, 1e-3, 1e3);
        let pb = penalize(&s, Measurement::Metrics(&m), b, 1e-3, 1e3);
        prop_assert_eq!(a < b, pa < pb);
    }

    #[test]
    fn wl_estimate_inverts_the_square_law(
        wl in 1.0f64..2000.0,
        id in 1e-7f64..1e-3,
        ratio in 0.2f64..5.0,
        pmos in any::<bool>(),
    ) {
        let profile = ProcessProfile::default();
        let polarity = if pmos { Polarity::P } else { Polarity::N };
        let mu = profile.mu_cox(polarity);
        let t = Transistor { name: "M".into(), polarity, w_over_l: wl, id };
        let gm = transconductance(mu, wl, id);
        let est = estimate_wl(gm, gm * ratio, &t, &profile.bounds);
        let [lo, hi] = profile.bounds.w_over_l;
        prop_assert!(est.transistor.w_over_l >= lo && est.transistor.w_over_l <= hi);
        prop_assert_eq!(est.transistor.id, id);
        let got = transconductance(mu, est.transistor.w_over_l, id);
        if est.clamped {
            prop_assert!((got * est.residual_ratio / (gm * ratio) - 1.0).abs() < 1e-9);
        } else {
            prop_assert!((got / (gm * ratio) - 1.0).abs() < 1e-9);
            prop_assert_eq!(est.residual_ratio, 1.0);
        }
    }

    #[test]
    fn abc_trajectory_is_elitist_and_in_bounds(d in dims(), seed in any::<u64>(), budget in 20usize..120) {
        let s = space(&d);
        let center = s.from_unit(&vec![0.3; s.dim()]);
        let mut seen = Vec::new();
        let mut f = |x: &[f64]| {
            seen.push(x.to_vec());
            x.iter().zip(&center).map(|(a, c)| ((a - c) / c.abs().max(1e-9)).powi(2)).sum::<f64>()
        };
        let r = abc_optimize(&mut f, &s, &RunOptions::new(budget, seed), &AbcConfig::default()).unwrap();
        prop_assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.n_evals, r.trajectory.len());
        prop_assert!(r.n_evals <= budget);
        prop_assert_eq!(seen.len(), r.n_evals);
        prop_assert!(seen.iter().all(|x| s.contains(x)));
        prop_assert_eq!(*r.trajectory.last().unwrap(), r.best_value);
    }

    #[test]
    fn sampled_specs_stay_in_range(seed in any::<u64>(), n in 1usize..40) {
        let range = SpecRange::DEFAULT;
        let specs = sample_specs(&mut ChaCha8Rng::seed_from_u64(seed), &range, 60.0, 100.0, n);
        prop_assert_eq!(specs.len(), n);
        for s in &specs {
            prop_assert!(s.gbw_min >= range.gbw_hz[0] && s.gbw_min <= range.gbw_hz[1]);
            prop_assert!(s.cl >= range.cl_f[0] && s.cl <= range.cl_f[1]);
        }
        let again = sample_specs(&mut ChaCha8Rng::seed_from_u64(seed), &range, 60.0, 100.0, n);
        prop_assert_eq!(specs, again);
    }

    #[test]
    fn cache_key_is_stable_under_tiny_perturbation(cl in 1e-12f64..1e-9, gbw in 1e5f64..1e8, eps in -1e-7f64..1e-7) {
        // keep clear of rounding boundaries at the fourth significant figure
        let snap = |x: f64| format!("{x:.3e}").parse::<f64>().unwrap();
        let (cl, gbw) = (snap(cl), snap(gbw));
        let cfg = ReasoningConfig::default();
        let a = CacheKey::new("SMC", &DesignSpec { cl, gbw_min: gbw, pm_min: 60.0, gain_min: 80.0 }, &cfg);
        let b = CacheKey::new(
            "SMC",
            &DesignSpec { cl: cl * (1.0 + eps), gbw_min: gbw * (1.0 - eps), pm_min: 60.0, gain_min: 80.0 },
            &cfg,
        );
        prop_assert_eq!(a, b);
    }
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, a) in c.iter().enumerate() {
            next[i] -= a * r;
            next[i + 1] += a;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

fn stable_roots() -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((2.0f64..7.0, 0.0f64..1.0, any::<bool>()), 1..4).prop_map(|specs| {
        let mut roots = Vec::new();
        for (mag, angle, pair) in specs {
            let w = 10f64.powf(mag);
            if pair {
                let theta = (100.0 + 70.0 * angle).to_radians();
                roots.push(Complex64::from_polar(w, theta));
                roots.push(Complex64::from_polar(w, -theta));
            } else {
                roots.push(Complex64::new(-w, 0.0));
            }
        }
        roots
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_scale_invariant(roots in stable_roots(), gain in 1e2f64..1e6, k in -1e3f64..1e3) {
        prop_assume!(k.abs() > 1e-3);
        let den = poly_from_roots(&roots);
        let num = vec![gain * den[0]];
        let tf = RationalTransferFunction::new(num, den).unwrap();
        let Ok(a) = ac_metrics(&tf) else { return Ok(()) };
        let b = ac_metrics(&tf.scaled(k).unwrap()).unwrap();
        prop_assert!((a.gbw_hz / b.gbw_hz - 1.0).abs() < 1e-9);
        prop_assert!((a.pm_deg - b.pm_deg).abs() < 1e-9);
        prop_assert_eq!(a.stable, b.stable);
    }

    #[test]
    fn pole_product_matches_coefficient_ratio(roots in stable_roots()) {
        let den = poly_from_roots(&roots);
        let tf = RationalTransferFunction::new(vec![den[0]], den.clone()).unwrap();
        let (poles, _) = poles_zeros(&tf).unwrap();
        let n = den.len() - 1;
        prop_assert_eq!(poles.len(), n);
        let product = poles.iter().fold(Complex64::new(1.0, 0.0), |p, z| p * z);
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let want = sign * den[0] / den[n];
        prop_assert!((product.re / want - 1.0).abs() < 1e-8, "{product} vs {want}");
        prop_assert!(product.im.abs() <= 1e-8 * want.abs());
    }
}

#[test]
fn turbo_trajectory_contract() {
    let s = space(&[(-5.0, 10.0, false), (-5.0, 10.0, false), (-5.0, 10.0, false)]);
    for seed in 0..4 {
        let mut seen = 0usize;
        let mut f = |x: &[f64]| {
            seen += 1;
            x.iter().map(|v| v * v).sum::<f64>()
        };
        let cfg = TurboConfig {
            n_trust_regions: 2,
            ..TurboConfig::default()
        };
        let r = turbo_optimize(&mut f, &s, &RunOptions::new(60, seed), &cfg).unwrap();
        assert!(r.trajectory.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.n_evals, r.trajectory.len());
        assert_eq!(seen, r.n_evals);
        assert!(r.n_evals <= 60);
        assert!(s.contains(&r.best_point));
    }
}
