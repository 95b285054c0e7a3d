//! Published reference figures shown next to measured results.

use super::Method;

/// Figure of merit of the original design and of the reported automated
/// design, in MHz·pF/mA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceIfom {
    pub topology: &'static str,
    pub original: f64,
    pub reported: f64,
}

pub const REFERENCE_IFOM: [ReferenceIfom; 7] = [
    ReferenceIfom { topology: "SMC", original: 400.0, reported: 1243.0 },
    ReferenceIfom { topology: "NMCNR", original: 410.0, reported: 778.0 },
    ReferenceIfom { topology: "NGCC", original: 36.0, reported: 981.0 },
    ReferenceIfom { topology: "DFCFC", original: 1238.0, reported: 6103.0 },
    ReferenceIfom { topology: "TCFC", original: 14250.0, reported: 41204.0 },
    ReferenceIfom { topology: "IAC", original: 33000.0, reported: 62435.0 },
    ReferenceIfom { topology: "AZC", original: 197916.0, reported: 322340.0 },
];

/// Average iterations, average time and success rate (`None` when every
/// run failed) for one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCell {
    pub iterations: f64,
    pub time_s: f64,
    pub success_rate: Option<f64>,
}

const fn cell(iterations: f64, time_s: f64, success_pct: f64) -> ReferenceCell {
    ReferenceCell {
        iterations,
        time_s,
        success_rate: Some(success_pct / 100.0),
    }
}

const fn failed(iterations: f64, time_s: f64) -> ReferenceCell {
    ReferenceCell {
        iterations,
        time_s,
        success_rate: None,
    }
}

/// Per topology: pipeline, ABC, TuRBO-5, TuRBO-1.
pub const REFERENCE_RUNS: [(&str, [ReferenceCell; 4]); 7] = [
    ("SMC", [cell(16.0, 245.0, 100.0), cell(35.0, 456.0, 68.0), cell(38.0, 460.0, 95.0), cell(56.0, 540.0, 76.0)]),
    ("NMCNR", [cell(19.0, 444.0, 100.0), cell(75.0, 600.0, 46.0), cell(53.0, 842.0, 84.0), cell(52.0, 597.0, 82.0)]),
    ("NGCC", [cell(22.0, 458.0, 98.0), cell(75.0, 543.0, 46.0), cell(29.0, 1200.0, 95.0), cell(35.0, 843.0, 94.0)]),
    ("DFCFC", [cell(33.0, 603.0, 95.0), cell(93.0, 783.0, 14.0), cell(53.0, 1321.0, 83.0), cell(46.0, 836.0, 88.0)]),
    ("TCFC", [cell(26.0, 471.0, 96.0), cell(75.0, 601.0, 54.0), cell(36.0, 894.0, 89.0), cell(48.0, 768.0, 85.0)]),
    ("IAC", [cell(25.0, 481.0, 97.0), failed(100.0, 1352.0), cell(61.0, 976.0, 73.0), cell(64.0, 742.0, 82.0)]),
    ("AZC", [cell(38.0, 696.0, 96.0), failed(100.0, 1465.0), failed(100.0, 2083.0), failed(100.0, 1610.0)]),
];

pub fn reference_ifom(topology: &str) -> Option<ReferenceIfom> {
    REFERENCE_IFOM
        .iter()
        .find(|r| r.topology.eq_ignore_ascii_case(topology))
        .copied()
}

pub fn reference_run(topology: &str, method: Method) -> Option<ReferenceCell> {
    let (_, cells) = REFERENCE_RUNS
        .iter()
        .find(|(t, _)| t.eq_ignore_ascii_case(topology))?;
    Some(cells[method.index()])
}

/// Minimum DC gain (dB) used for each topology's sampled specs.
pub fn default_gain_min(topology: &str) -> Option<f64> {
    match topology.to_ascii_uppercase().as_str() {
        "NMCNR" => Some(120.0),
        "SMC" => Some(70.0),
        "NGCC" | "DFCFC" | "TCFC" | "IAC" | "AZC" => Some(100.0),
        _ => None,
    }
}
