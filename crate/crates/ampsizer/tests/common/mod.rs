#![allow(dead_code)]

use ampsizer::TopologyDescriptor;

/// One transconductor driving the load: H(s) = gm1 ro1 / (1 + s C_L ro1).
pub const SINGLE_POLE: &str = r#"
format_version = 1
name = "ONEPOLE"
title = "single transconductor"
num_stages = 1

[[stages]]
id = "stage1"
label = "transconductor"

[[variables]]
symbol = "gm1"
kind = "transconductance"
role = "design"
bounds = [8e-06, 0.034]
stage = "stage1"

[[variables]]
symbol = "ro1"
kind = "resistance"
role = "output_resistance"
bounds = [10000.0, 100000000.0]
stage = "global"

[[devices]]
name = "M1"
polarity = "n"
gm = "gm1"
ro = "ro1"

[[numerator]]
power = 0
terms = [{ k = 1.0, m = ["gm1", "ro1"] }]

[[denominator]]
power = 0
terms = [{ k = 1.0, m = [] }]

[[denominator]]
power = 1
terms = [{ k = 1.0, m = ["C_L", "ro1"] }]

[[design_equations]]
label = "unity-gain frequency"
relation = "eq"
terms = [
  { k = 1.0, m = ["gm1"] },
  { k = -6.283185307179586, m = ["C_L", "GBW"] },
]
"#;

pub fn single_pole() -> TopologyDescriptor {
    TopologyDescriptor::from_toml_str(SINGLE_POLE).expect("toy descriptor is valid")
}
