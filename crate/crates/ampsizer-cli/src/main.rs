use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ampsizer::analysis::bode_export;
use ampsizer::bench::{check_trends, default_gain_min, emit_report, run_comparison_with, BenchConfig, ReportFormat};
use ampsizer::kb::{KbError, CACHE_DIR_ENV};
use ampsizer::sizing::SizingError;
use ampsizer::{
    ac_metrics, assemble_tf, builtin, catalog, design, DesignSpec, OptimizerKind, PipelineConfig, ProcessProfile,
    ReasoningCache, SmallSignalParams, TopologyDescriptor,
};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ampsizer", version, about = "Size multi-stage operational amplifiers")]
struct Cli {
    /// Process profile (TOML); the bundled generic profile when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    profile: Option<PathBuf>,
    /// Directory holding cached design targets.
    #[arg(long, global = true, env = CACHE_DIR_ENV, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print per-phase and per-run progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size one amplifier for a spec.
    Design(DesignArgs),
    /// Report AC metrics for explicit small-signal values.
    Analyze(AnalyzeArgs),
    /// List the built-in topologies, or print one descriptor.
    Topologies {
        name: Option<String>,
    },
    /// Compare the pipeline with the raw optimizers.
    Bench {
        config: PathBuf,
        /// Exit 1 unless every trend check passes.
        #[arg(long)]
        check: bool,
    },
    /// Inspect or clear the target cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Built-in topology name or descriptor file.
    topology: String,
    /// Minimum unity-gain frequency (Hz).
    #[arg(long)]
    gbw: f64,
    /// Load capacitance (F).
    #[arg(long)]
    cl: f64,
    /// Minimum phase margin (degrees).
    #[arg(long, default_value_t = 60.0)]
    pm: f64,
    /// Minimum DC gain (dB); the topology's usual value when omitted.
    #[arg(long)]
    gain: Option<f64>,
    /// Skip the optimizer fallback inside sub-problems.
    #[arg(long)]
    no_subopt: bool,
    /// Skip whole-circuit refinement.
    #[arg(long)]
    no_globalopt: bool,
    /// Refinement optimizer.
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    /// Pipeline settings (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Ignore the target cache.
    #[arg(long)]
    no_cache: bool,
    /// Where to write the sized design.
    #[arg(short, long, default_value = "design.json")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Built-in topology name or descriptor file.
    topology: String,
    /// TOML or JSON table of symbol values, including C_L.
    values: PathBuf,
    /// Also write a Bode CSV.
    #[arg(long, value_name = "PATH")]
    bode: Option<PathBuf>,
    /// First Bode frequency (Hz).
    #[arg(long, default_value_t = 1.0)]
    from: f64,
    /// Last Bode frequency (Hz).
    #[arg(long, default_value_t = 1e10)]
    to: f64,
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    /// Print the cache directory.
    Path,
    /// List cached entries.
    List,
    /// Delete every entry.
    Clear,
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse()
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<KbError> for CliError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::Storage { .. } => CliError::Failed(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SizingError> for CliError {
    fn from(e: SizingError) -> Self {
        match e {
            SizingError::Config(_) => CliError::Usage(e.to_string()),
            SizingError::Reasoning(ampsizer::reasoning::ReasoningError::InvalidSpec(_)) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Design(args) => cmd_design(cli, args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Topologies { name } => cmd_topologies(name.as_deref()),
        Command::Bench { config, check } => cmd_bench(cli, config, *check),
        Command::Cache { action } => cmd_cache(cli, action),
    }
}

fn profile(cli: &Cli) -> Result<ProcessProfile, CliError> {
    match &cli.profile {
        Some(p) => ProcessProfile::load(p).map_err(usage),
        None => Ok(ProcessProfile::default()),
    }
}

fn cache(cli: &Cli) -> ReasoningCache {
    match &cli.cache_dir {
        Some(d) => ReasoningCache::new(d),
        None => ReasoningCache::new(ReasoningCache::default_dir()),
    }
}

/// A built-in name, or a path when the argument names an existing file.
fn topology(arg: &str) -> Result<TopologyDescriptor, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return TopologyDescriptor::load(path).map_err(usage);
    }
    Ok(builtin(arg)?)
}

fn cmd_design(cli: &Cli, args: &DesignArgs) -> Result<u8, CliError> {
    let desc = topology(&args.topology)?;
    let gain = match args.gain.or_else(|| default_gain_min(desc.name())) {
        Some(g) => g,
        None => return Err(usage(format!("--gain is required for topology {}", desc.name()))),
    };
    let spec = DesignSpec::new(args.cl, args.gbw, args.pm, gain).map_err(usage)?;
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            toml::from_str::<PipelineConfig>(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if args.no_subopt {
        cfg.use_subproblem_optimizer = false;
    }
    if args.no_globalopt {
        cfg.use_global_optimizer = false;
    }
    if let Some(kind) = args.optimizer {
        cfg.global_optimizer = kind;
    }
    let profile = profile(cli)?;
    let cache = (!args.no_cache).then(|| cache(cli));

    let d = design(&spec, &desc, &profile, &cfg, cache.as_ref())?;
    d.write_json(&args.output)
        .map_err(|e| failed(format!("{}: {e}", args.output.display())))?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "topology     {}", d.topology);
    let _ = writeln!(out, "spec         {}", d.spec);
    match &d.metrics {
        Some(m) => {
            let _ = writeln!(out, "GBW          {:.4} MHz", m.gbw_hz / 1e6);
            let _ = writeln!(out, "PM           {:.2} deg", m.pm_deg);
            let _ = writeln!(out, "DC gain      {:.2} dB", m.dc_gain_db);
        }
        None => {
            let _ = writeln!(out, "metrics      unavailable");
        }
    }
    let _ = writeln!(out, "I_dd         {:.4} mA", d.i_dd * 1e3);
    let _ = writeln!(out, "evaluations  {}", d.history.total_evaluations);
    let _ = writeln!(out, "success      {}", d.success);
    let _ = writeln!(out, "written      {}", args.output.display());
    if cli.verbose > 0 {
        for p in &d.history.phases {
            eprintln!("{:<12} {:>5} evaluations {:>9.3} s", p.phase, p.evaluations, p.wall_time_s);
        }
        for s in &d.history.subproblems {
            eprintln!(
                "  {:<10} {:>3} evaluations, converged {}",
                s.stage, s.evaluations, s.converged
            );
        }
    }
    Ok(if d.success { 0 } else { 1 })
}

fn read_values(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8, CliError> {
    let desc = topology(&args.topology)?;
    let mut values = read_values(&args.values)?;
    let cl = values
        .remove("C_L")
        .ok_or_else(|| usage(format!("{}: no value for C_L", args.values.display())))?;
    let ssp = SmallSignalParams { values, i_dd: 0.0 };
    let tf = assemble_tf(&desc, &ssp, cl).map_err(usage)?;
    let m = ac_metrics(&tf).map_err(failed)?;
    println!("{}", serde_json::to_string_pretty(&m).expect("metrics serialize"));
    if let Some(path) = &args.bode {
        bode_export(&tf, path, args.from, args.to).map_err(failed)?;
    }
    Ok(0)
}

fn cmd_topologies(name: Option<&str>) -> Result<u8, CliError> {
    if let Some(name) = name {
        print!("{}", builtin(name)?.to_toml_string());
        return Ok(0);
    }
    println!("{:<7} {:<6} {:<56} design variables", "name", "stages", "title");
    for d in catalog() {
        println!(
            "{:<7} {:<6} {:<56} {}",
            d.name(),
            d.num_stages(),
            d.title(),
            d.design_variables().join(", ")
        );
    }
    Ok(0)
}

fn cmd_bench(cli: &Cli, path: &Path, check: bool) -> Result<u8, CliError> {
    let mut cfg = BenchConfig::load(path).map_err(usage)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let profile = profile(cli)?;
    let verbose = cli.verbose > 0;
    let report = run_comparison_with(&cfg, &profile, |r| {
        if verbose {
            let outcome = if r.success { "ok" } else { "failed" };
            eprintln!(
                "{} {:<8} run {:>3}: {outcome} after {} evaluations",
                r.topology, r.method, r.run, r.evaluations
            );
        }
    })
    .map_err(failed)?;

    let out = &cfg.output;
    let mut written = Vec::new();
    if let Some(p) = &out.markdown {
        emit_report(&report, ReportFormat::Markdown, p).map_err(failed)?;
        written.push(p.clone());
    }
    if let Some(p) = &out.csv {
        emit_report(&report, ReportFormat::Csv, p).map_err(failed)?;
        written.push(p.clone());
    }
    if let Some(p) = &out.runs {
        let body = serde_json::to_string_pretty(&report.runs).expect("runs serialize");
        std::fs::write(p, body + "\n").map_err(|e| failed(format!("{}: {e}", p.display())))?;
        written.push(p.clone());
    }
    if written.is_empty() {
        print!("{}", ampsizer::bench::render(&report, ReportFormat::Markdown));
    }
    for p in &written {
        println!("wrote {}", p.display());
    }

    if !check {
        return Ok(0);
    }
    let checks = check_trends(&report);
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_cache(cli: &Cli, action: &CacheAction) -> Result<u8, CliError> {
    let cache = cache(cli);
    match action {
        CacheAction::Path => println!("{}", cache.dir().display()),
        CacheAction::List => {
            for e in cache.entries()? {
                let t = &e.targets;
                println!(
                    "{:<6} {} GBW target {:.4e} Hz, separation {:.3}",
                    e.key.topology, e.key.spec, t.gbw_target_hz, t.separation_factor
                );
            }
        }
        CacheAction::Clear => println!("removed {} entries", cache.clear()?),
    }
    Ok(0)
}
