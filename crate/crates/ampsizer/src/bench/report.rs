//! Markdown and CSV rendering of a [`BenchReport`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{reference_ifom, reference_run, BenchError, BenchReport, CellSummary};

pub const MARKDOWN_HEADER: &str = "| Topology | Method | Runs | Success rate | Avg. evaluations | Median evaluations | Avg. time (s) | Median IFOM | Ref. iterations | Ref. time (s) | Ref. success rate |";
pub const CSV_HEADER: &str = "topology,method,runs,success_rate,avg_evaluations,median_evaluations,avg_time_s,median_ifom,ref_iterations,ref_time_s,ref_success_rate,ref_ifom_original,ref_ifom_reported";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

/// Three significant figures, without exponent notation.
pub fn format_sig3(x: f64) -> String {
    if !x.is_finite() {
        return "-".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.2e}").parse().expect("formatted float parses");
    let mag = rounded.abs().log10().floor() as i32;
    if mag >= 2 {
        format!("{rounded:.0}")
    } else {
        format!("{rounded:.*}", (2 - mag) as usize)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), format_sig3)
}

fn reference_fields(c: &CellSummary) -> (String, String, String) {
    match reference_run(&c.topology, c.method) {
        Some(r) => (
            format!("{}", r.iterations),
            format!("{}", r.time_s),
            r.success_rate
                .map_or_else(|| "failed".into(), |s| format!("{}", s)),
        ),
        None => ("-".into(), "-".into(), "-".into()),
    }
}

fn markdown(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Sizing benchmark\n");
    let _ = writeln!(
        s,
        "Budget {} evaluations per run, {} runs per topology, seed {}. An evaluation is one device, transfer-function and AC analysis pass. Runs that never meet the spec are charged the full budget in the evaluation columns. Reference columns hold published figures for comparison.\n",
        report.budget, report.n_runs, report.seed
    );
    let _ = writeln!(s, "{MARKDOWN_HEADER}");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|---|");
    for c in &report.cells {
        let (ri, rt, rs) = reference_fields(c);
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {ri} | {rt} | {rs} |",
            c.topology,
            c.method,
            c.runs,
            format_sig3(c.success_rate),
            format_sig3(c.avg_evaluations),
            format_sig3(c.median_evaluations),
            format_sig3(c.avg_wall_time_s),
            opt(c.median_ifom),
        );
    }
    let _ = writeln!(s, "\n## Figure of merit (MHz·pF/mA)\n");
    let _ = writeln!(s, "| Topology | Pipeline median IFOM | Ref. original IFOM | Ref. reported IFOM |");
    let _ = writeln!(s, "|---|---|---|---|");
    let mut seen = Vec::new();
    for c in &report.cells {
        if seen.contains(&c.topology) {
            continue;
        }
        seen.push(c.topology.clone());
        let ifom = report
            .cell(&c.topology, super::Method::Pipeline)
            .and_then(|p| p.median_ifom);
        let r = reference_ifom(&c.topology);
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} |",
            c.topology,
            opt(ifom),
            r.map_or("-".into(), |r| format!("{}", r.original)),
            r.map_or("-".into(), |r| format!("{}", r.reported)),
        );
    }
    s
}

fn csv(report: &BenchReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{CSV_HEADER}");
    for c in &report.cells {
        let (ri, rt, rs) = reference_fields(c);
        let r = reference_ifom(&c.topology);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{ri},{rt},{rs},{},{}",
            c.topology,
            c.method,
            c.runs,
            format_sig3(c.success_rate),
            format_sig3(c.avg_evaluations),
            format_sig3(c.median_evaluations),
            format_sig3(c.avg_wall_time_s),
            opt(c.median_ifom),
            r.map_or("-".into(), |r| format!("{}", r.original)),
            r.map_or("-".into(), |r| format!("{}", r.reported)),
        );
    }
    s
}

pub fn render(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => markdown(report),
        ReportFormat::Csv => csv(report),
    }
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), BenchError> {
    let path = path.as_ref();
    std::fs::write(path, render(report, format)).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_significant_figures() {
        assert_eq!(format_sig3(62435.0), "62400");
        assert_eq!(format_sig3(778.2), "778");
        assert_eq!(format_sig3(9.996), "10.0");
        assert_eq!(format_sig3(0.012345), "0.0123");
        assert_eq!(format_sig3(1.0), "1.00");
        assert_eq!(format_sig3(0.0), "0");
        assert_eq!(format_sig3(-2.5), "-2.50");
        assert_eq!(format_sig3(f64::NAN), "-");
    }
}
