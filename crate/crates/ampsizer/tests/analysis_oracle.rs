//! Coefficients assembled by the library against a direct walk over the
//! descriptor file's term lists.

use std::collections::BTreeMap;

use ampsizer::device::Binding;
use ampsizer::{
    assemble_tf, builtin, evaluate_devices, solve_targets, DesignSpec, DeviceParams, ProcessProfile, ReasoningConfig,
    SmallSignalParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn walk(table: &toml::Value, key: &str, values: &BTreeMap<String, f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for coeff in table[key].as_array().unwrap() {
        let power = coeff["power"].as_integer().unwrap() as usize;
        if out.len() <= power {
            out.resize(power + 1, 0.0);
        }
        for term in coeff["terms"].as_array().unwrap() {
            let mut v = term["k"].as_float().unwrap();
            for sym in term["m"].as_array().unwrap() {
                v *= values[sym.as_str().unwrap()];
            }
            out[power] += v;
        }
    }
    while out.len() > 1 && out.last() == Some(&0.0) {
        out.pop();
    }
    out
}

fn random_state(binding: &Binding, profile: &ProcessProfile, rng: &mut ChaCha8Rng) -> DeviceParams {
    let mut state = binding.mid_bounds(&profile.bounds);
    let log_uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| (rng.random_range(lo.ln()..=hi.ln())).exp();
    for t in &mut state.transistors {
        t.w_over_l = log_uniform(rng, profile.bounds.w_over_l);
        t.id = log_uniform(rng, profile.bounds.id);
    }
    for p in &mut state.passives {
        p.value = log_uniform(rng, [1e-13, 1e-11]);
    }
    state
}

fn ngcc_file() -> toml::Value {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../topologies/ngcc.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

#[test]
fn ngcc_coefficients_match_the_file() {
    let file = ngcc_file();
    let desc = builtin("NGCC").unwrap();
    let profile = ProcessProfile::default();
    let binding = Binding::new(&desc);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let state = random_state(&binding, &profile, &mut rng);
        let ssp = evaluate_devices(&state, &profile, &binding).unwrap();
        let cl = (rng.random_range((1e-12f64).ln()..=(1e-9f64).ln())).exp();
        let mut values = ssp.values.clone();
        values.insert("C_L".into(), cl);

        let tf = assemble_tf(&desc, &ssp, cl).unwrap();
        let num = walk(&file, "numerator", &values);
        let den = walk(&file, "denominator", &values);
        assert_eq!(tf.den().len(), den.len());
        assert_eq!(tf.num().len(), num.len());
        for (a, b) in tf.den().iter().zip(&den).chain(tf.num().iter().zip(&num)) {
            assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
        }
    }
}

#[test]
fn ngcc_denominator_is_positive_at_solved_targets() {
    let file = ngcc_file();
    let desc = builtin("NGCC").unwrap();
    let cfg = ReasoningConfig::default();
    for gbw in [1e6, 3e6, 10e6] {
        for cl in [10e-12, 30e-12, 100e-12] {
            let spec = DesignSpec::new(cl, gbw, 60.0, 100.0).unwrap();
            let t = solve_targets(&spec, &desc, &cfg).unwrap();
            let mut values: BTreeMap<String, f64> = BTreeMap::new();
            for v in desc.variables() {
                let x = v
                    .value
                    .or_else(|| t.target(&v.symbol).map(|t| t.value))
                    .or_else(|| t.assumed_output_resistance.get(&v.symbol).copied())
                    .unwrap();
                values.insert(v.symbol.clone(), x);
            }
            let ssp = SmallSignalParams { values: values.clone(), i_dd: 0.0 };
            values.insert("C_L".into(), cl);
            let den = walk(&file, "denominator", &values);
            assert!(den.iter().all(|&c| c > 0.0), "{gbw} Hz, {cl} F: {den:?}");
            assert_eq!(assemble_tf(&desc, &ssp, cl).unwrap().den().len(), den.len());
        }
    }
}
