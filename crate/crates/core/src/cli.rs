//! Command-line harness: `generate`, `run` and `sweep`.
//!
//! Exit codes: 0 ok, 1 usage, 2 invalid config or instance, 3 I/O,
//! 4 verification failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::baseline::run_greedy_rtl;
use crate::error::{OracleError, ScheduleError};
use crate::gen::{generate_instance, GenConfig};
use crate::metrics::{
    compute_metrics, verify_bound, verify_dual_feasibility, verify_primal_feasibility, MetricsRow,
};
use crate::model::{approximation_bound, ensure_valid, Instance, Schedule};
use crate::oracle::{brute_force_opt, min_peak_among_optimal, DEFAULT_ENUMERATION_LIMIT};
use crate::scheduler::{run_with, trace_to_jsonl, Engine, EngineConfig, TraceRecord};

pub const WORKERS_ENV: &str = "PEAKSHAVER_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(String),
    Io(String),
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "peakshaver",
    version,
    about = "Peak-constrained EV charging scheduler"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a random instance and write it as JSON.
    Generate(GenerateArgs),
    /// Schedule one instance and print its metrics row.
    Run(RunArgs),
    /// Sweep one generator parameter over seeds and engines.
    Sweep(SweepArgs),
}

/// Generator settings; each flag overrides the preset (or `--config` file).
#[derive(Debug, Clone, Args)]
pub struct GenFlags {
    /// JSON file with a generator config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the desk-scale preset (60 EVs, caps 40/160).
    #[arg(long)]
    pub scaled: bool,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub stations: Option<usize>,
    #[arg(long)]
    pub evs: Option<usize>,
    #[arg(long)]
    pub local_cap: Option<f64>,
    #[arg(long)]
    pub global_cap: Option<f64>,
    #[arg(long)]
    pub slackness: Option<f64>,
    #[arg(long)]
    pub rate_min: Option<u32>,
    #[arg(long)]
    pub rate_max: Option<u32>,
    #[arg(long)]
    pub price_min: Option<f64>,
    #[arg(long)]
    pub price_max: Option<f64>,
    /// Deadline windows, e.g. `7-9,12-14,16-19`.
    #[arg(long)]
    pub windows: Option<String>,
    /// One weight per window, e.g. `1,2,1`.
    #[arg(long)]
    pub window_weights: Option<String>,
}

impl GenFlags {
    pub fn resolve(&self) -> Result<GenConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
            }
            None if self.scaled => GenConfig::scaled_default(),
            None => GenConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { cfg.$field = v; } )* };
        }
        set!(
            horizon, stations, evs, local_cap, global_cap, slackness, rate_min, rate_max,
            price_min, price_max
        );
        if let Some(w) = &self.windows {
            cfg.deadline_windows = parse_windows(w)?;
        }
        if let Some(w) = &self.window_weights {
            cfg.window_weights = parse_list(w)?;
        }
        Ok(cfg)
    }
}

fn parse_windows(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(',')
        .map(|part| {
            let (a, b) = part
                .trim()
                .split_once('-')
                .unwrap_or((part.trim(), part.trim()));
            let a = a
                .parse()
                .map_err(|_| CliError::Usage(format!("bad window '{part}'")))?;
            let b = b
                .parse()
                .map_err(|_| CliError::Usage(format!("bad window '{part}'")))?;
            Ok((a, b))
        })
        .collect()
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad number '{v}'")))
        })
        .collect()
}

/// Parses `10,20,30` or an inclusive range `a..b` / `a..b:step` (step 10
/// when omitted).
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let Some((a, rest)) = text.split_once("..") else {
        return parse_list(text);
    };
    let (b, step) = rest.split_once(':').unwrap_or((rest, "10"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("bad range '{text}'")))
    };
    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
    if !(step > 0.0) || b < a {
        return Err(CliError::Usage(format!("bad range '{text}'")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| a + k as f64 * step).collect())
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub gen: GenFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct EngineFlags {
    /// Whether GreedyRTL runs the exchange phase.
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub baseline_reconsider: Switch,
    /// Experimental SCS variant: water-filling allocation instead of a single
    /// ranked pass.
    #[arg(long)]
    pub rerank: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "scs")]
    pub engine: Engine,
    /// Check primal feasibility, dual feasibility (scs) and the bound chain.
    #[arg(long)]
    pub verify: bool,
    /// Also compute the exact optimum (small instances only).
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
    pub oracle_limit: usize,
    /// Metrics CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the decision trace as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub engine_flags: EngineFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Evs,
    Ctotal,
    Slackness,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Evs => "evs",
            SweepParam::Ctotal => "ctotal",
            SweepParam::Slackness => "slackness",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// `10,20,30` or `a..b[:step]`.
    #[arg(long)]
    pub values: String,
    /// Number of seeds per value.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub seed_start: u64,
    /// Comma-separated engines.
    #[arg(long, default_value = "scs")]
    pub engines: String,
    /// Add the exact optimum and pseudo-optimal peak columns.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_LIMIT)]
    pub oracle_limit: usize,
    /// Detail CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary CSV; defaults to `<out>.summary.csv` next to `--out`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Worker threads (falls back to PEAKSHAVER_WORKERS, then CPU count).
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub gen: GenFlags,
    #[command(flatten)]
    pub engine_flags: EngineFlags,
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_err(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = args.gen.resolve()?;
    cfg.seed = args.seed;
    let inst = generate_instance(&cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
    let mut text = inst.to_json();
    text.push('\n');
    write_text(args.out.as_deref(), &text)
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let inst = Instance::from_json(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    ensure_valid(&inst).map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(inst)
}

/// Everything one engine run produces, engine-agnostic.
#[derive(Debug, Clone)]
pub struct EngineRun {
    pub engine: Engine,
    pub schedule: Schedule,
    pub certificate: Option<crate::model::DualCertificate>,
    pub charges: Option<crate::scheduler::ChargeTable>,
    pub trace: Vec<TraceRecord>,
    pub phase1_revenue: f64,
}

pub fn run_engine(
    instance: &Instance,
    engine: Engine,
    flags: &EngineFlags,
) -> Result<EngineRun, CliError> {
    match engine {
        Engine::Scs => {
            let cfg = EngineConfig {
                rerank: flags.rerank,
                ..EngineConfig::scs()
            };
            let out = run_with(instance, cfg)?;
            Ok(EngineRun {
                engine,
                schedule: out.schedule,
                certificate: Some(out.certificate),
                charges: Some(out.charges),
                trace: out.trace,
                phase1_revenue: out.phase1_revenue,
            })
        }
        Engine::GreedyRtl => {
            let out = run_greedy_rtl(instance, flags.baseline_reconsider == Switch::On)?;
            Ok(EngineRun {
                engine,
                schedule: out.schedule,
                certificate: None,
                charges: None,
                trace: out.trace,
                phase1_revenue: out.phase1_revenue,
            })
        }
    }
}

pub fn metrics_row(instance: &Instance, id: &str, run: &EngineRun, opt: Option<f64>) -> MetricsRow {
    let report = compute_metrics(instance, &run.schedule);
    let ratio_to_opt = opt.map(|o| if o > 0.0 { report.revenue / o } else { 1.0 });
    MetricsRow {
        instance_id: id.to_string(),
        engine: run.engine.to_string(),
        report,
        alpha_bound: approximation_bound(instance).ok(),
        dual_objective: run.certificate.as_ref().map(|c| c.dual_objective),
        opt_revenue: opt,
        ratio_to_opt,
    }
}

/// Runs every applicable check and returns the failures, one per line.
pub fn verify_run(instance: &Instance, run: &EngineRun, opt: Option<f64>) -> Vec<String> {
    let mut failures: Vec<String> = verify_primal_feasibility(instance, &run.schedule)
        .iter()
        .map(|v| format!("primal: {v}"))
        .collect();
    if run.schedule.revenue(instance) + 1e-9 < run.phase1_revenue {
        failures.push("phase 2 lowered revenue".into());
    }
    if let Some(cert) = &run.certificate {
        failures.extend(verify_dual_feasibility(instance, cert).iter().map(|v| {
            format!(
                "dual: request {} slot {} slack {}",
                v.request_id, v.slot, v.slack
            )
        }));
        if !cert.is_consistent(instance) {
            failures.push("dual objective inconsistent with certificate".into());
        }
        // The guarantee assumes every EV could use a full slot at its rate;
        // a global cap at or below some rate voids it (weak duality stands).
        let k_max = instance
            .station_max_rates()
            .into_iter()
            .flatten()
            .fold(0.0, f64::max);
        let bound_applies = instance.global_cap > k_max;
        if let Ok(rep) = verify_bound(instance, &run.schedule, cert, run.charges.as_ref(), opt) {
            if bound_applies && !rep.bound_holds {
                failures.push(format!(
                    "bound: dual objective {} exceeds alpha*revenue {}",
                    rep.dual_objective, rep.scaled_revenue
                ));
            }
            if rep.weak_duality_holds == Some(false) {
                failures.push(format!(
                    "weak duality: dual objective {} below optimum {:?}",
                    rep.dual_objective, rep.opt_revenue
                ));
            }
        }
    }
    failures
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let inst = load_instance(&args.instance)?;
    let run = run_engine(&inst, args.engine, &args.engine_flags)?;
    let opt = if args.oracle {
        Some(brute_force_opt(&inst, args.oracle_limit)?.revenue)
    } else {
        None
    };
    let id = args
        .instance
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let row = metrics_row(&inst, &id, &run, opt);
    write_text(args.out.as_deref(), &row.to_csv())?;
    if let Some(path) = &args.trace {
        fs::write(path, trace_to_jsonl(&run.trace)).map_err(|e| io_err(path, e))?;
    }
    if args.verify {
        let failures = verify_run(&inst, &run, opt);
        if !failures.is_empty() {
            return Err(CliError::Verification(failures.join("\n")));
        }
        eprintln!("verification passed");
    }
    Ok(())
}

fn parse_engines(text: &str) -> Result<Vec<Engine>, CliError> {
    let mut engines = text
        .split(',')
        .map(|e| e.trim().parse::<Engine>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    engines.sort();
    engines.dedup();
    Ok(engines)
}

fn worker_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok())
        .filter(|&n| n > 0)
}

fn apply_param(base: &GenConfig, param: SweepParam, value: f64) -> Result<GenConfig, CliError> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Evs => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(CliError::Invalid(format!(
                    "EV count {value} is not a whole number"
                )));
            }
            cfg.evs = value as usize;
        }
        SweepParam::Ctotal => cfg.global_cap = value,
        SweepParam::Slackness => cfg.slackness = value,
    }
    cfg.validate()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok(cfg)
}

/// Detail columns prepended/appended around the metrics row.
pub fn sweep_header(stations: usize) -> Vec<String> {
    let mut cols = vec!["param".to_string(), "value".into(), "seed".into()];
    cols.extend(MetricsRow::header(stations));
    cols.push("pseudo_opt_peak".into());
    cols
}

/// Metrics aggregated per (value, engine) in the summary file.
pub const SUMMARY_METRICS: [&str; 7] = [
    "revenue",
    "normalized_revenue",
    "utilization",
    "acceptance_rate",
    "actual_peak",
    "ratio_to_opt",
    "pseudo_opt_peak",
];

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub row: MetricsRow,
    pub pseudo_opt_peak: Option<f64>,
}

impl SweepRow {
    fn metric(&self, name: &str) -> Option<f64> {
        let r = &self.row.report;
        match name {
            "revenue" => Some(r.revenue),
            "normalized_revenue" => Some(r.normalized_revenue),
            "utilization" => Some(r.utilization),
            "acceptance_rate" => Some(r.acceptance_rate),
            "actual_peak" => Some(r.actual_peak),
            "ratio_to_opt" => self.row.ratio_to_opt,
            "pseudo_opt_peak" => self.pseudo_opt_peak,
            _ => None,
        }
    }
}

/// Sample mean, sample standard deviation (n − 1) and count.
pub fn mean_std(xs: &[f64]) -> (f64, f64, usize) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var.sqrt(), n)
}

pub fn run_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    let base = args.gen.resolve()?;
    let values = parse_values(&args.values)?;
    let engines = parse_engines(&args.engines)?;

    let mut configs = Vec::new();
    for &value in &values {
        let cfg = apply_param(&base, args.param, value)?;
        let local_total = cfg.local_cap * cfg.stations as f64;
        if engines.contains(&Engine::GreedyRtl) && local_total > cfg.global_cap + 1e-9 {
            return Err(CliError::Invalid(format!(
                "greedy-rtl needs stations*local_cap <= global_cap ({local_total} > {} at {}={value})",
                cfg.global_cap,
                args.param.name()
            )));
        }
        if args.oracle && cfg.evs > args.oracle_limit {
            return Err(CliError::Invalid(format!(
                "--oracle needs at most {} EVs ({} at {}={value})",
                args.oracle_limit,
                cfg.evs,
                args.param.name()
            )));
        }
        for seed in args.seed_start..args.seed_start + args.seeds {
            configs.push((
                value,
                GenConfig {
                    seed,
                    ..cfg.clone()
                },
            ));
        }
    }

    let work = |(value, cfg): &(f64, GenConfig)| -> Result<Vec<SweepRow>, CliError> {
        let inst = generate_instance(cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
        let (opt, pseudo) = if args.oracle {
            (
                Some(brute_force_opt(&inst, args.oracle_limit)?.revenue),
                Some(min_peak_among_optimal(&inst, args.oracle_limit)?),
            )
        } else {
            (None, None)
        };
        let id = format!("{}={value}/seed={}", args.param.name(), cfg.seed);
        engines
            .iter()
            .map(|&engine| {
                let run = run_engine(&inst, engine, &args.engine_flags)?;
                Ok(SweepRow {
                    value: *value,
                    seed: cfg.seed,
                    row: metrics_row(&inst, &id, &run, opt),
                    pseudo_opt_peak: pseudo,
                })
            })
            .collect()
    };

    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = worker_count(args.workers) {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Invalid(e.to_string()))?
    };
    let chunks: Vec<Result<Vec<SweepRow>, CliError>> =
        pool.install(|| configs.par_iter().map(work).collect());
    let mut rows = Vec::new();
    for chunk in chunks {
        rows.extend(chunk?);
    }
    Ok(rows)
}

pub fn sweep_detail_csv(param: &str, stations: usize, rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(sweep_header(stations))
        .expect("in-memory write");
    for r in rows {
        let mut rec = vec![param.to_string(), r.value.to_string(), r.seed.to_string()];
        rec.extend(r.row.fields());
        rec.push(r.pseudo_opt_peak.map(|p| p.to_string()).unwrap_or_default());
        w.write_record(rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn sweep_summary_csv(param: &str, rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "param", "value", "engine", "metric", "mean", "stddev", "count",
    ])
    .expect("in-memory write");
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows {
        let key = (r.value, r.row.engine.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (value, engine) in keys {
        let group: Vec<&SweepRow> = rows
            .iter()
            .filter(|r| r.value == value && r.row.engine == engine)
            .collect();
        for metric in SUMMARY_METRICS {
            let xs: Vec<f64> = group.iter().filter_map(|r| r.metric(metric)).collect();
            if xs.is_empty() {
                continue;
            }
            let (mean, sd, n) = mean_std(&xs);
            w.write_record([
                param.to_string(),
                value.to_string(),
                engine.clone(),
                metric.to_string(),
                mean.to_string(),
                sd.to_string(),
                n.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn summary_path(args: &SweepArgs) -> Option<PathBuf> {
    args.summary.clone().or_else(|| {
        args.out.as_ref().map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            p.with_file_name(format!("{stem}.summary.csv"))
        })
    })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let rows = run_sweep(args)?;
    let stations = args.gen.resolve()?.stations;
    let param = args.param.name();
    write_text(
        args.out.as_deref(),
        &sweep_detail_csv(param, stations, &rows),
    )?;
    let summary = sweep_summary_csv(param, &rows);
    match summary_path(args) {
        Some(path) => fs::write(&path, summary).map_err(|e| io_err(&path, e))?,
        None => eprint!("{summary}"),
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("peakshaver: {e}");
            e.exit_code()
        }
    }
}
