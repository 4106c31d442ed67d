//! Trial runner behind the `motm` binary: single runs, seeded batches,
//! paired mode comparisons and reports rebuilt from per-trial files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use motm_core::sim::{run_trial, Mode, SimConfig, TaskSpec, TrialMetrics, TrialSummary};
use motm_core::world::ScenarioConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Exit code for a completed run whose task failed.
pub const EXIT_TASK_FAILURE: i32 = 2;
/// Exit code for bad arguments, scenarios or overrides.
pub const EXIT_CONFIG_ERROR: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("trial failed to start: {0}")]
    Sim(#[from] motm_core::sim::SimError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "motm", version, about = "Mobile manipulation on-the-move trial runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and write its metrics.
    Run(RunArgs),
    /// Run a range of seeds in one mode and write an aggregate.
    Batch(BatchArgs),
    /// Run a range of seeds in both modes and compare task times.
    Compare(CompareArgs),
    /// Rebuild aggregates from the per-trial files in a directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a setting, e.g. `local.node_budget=1000` or
    /// `robot.inflation_margin=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "otm")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "otm")]
    pub mode: Mode,
    /// Seed range `A..B` (half-open), `A..=B` or a single seed.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: SeedRange,
    /// Parallel trials; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: SeedRange,
    #[arg(long)]
    pub workers: Option<usize>,
    /// The two modes to compare, candidate first.
    #[arg(long, num_args = 2, value_names = ["A", "B"], default_values = ["otm", "stop"])]
    pub modes: Vec<Mode>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding per-trial JSON files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Inclusive seed interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        (self.last - self.first) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let num = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}"));
    let (first, last) = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?, num(b)?)
    } else if let Some((a, b)) = s.split_once("..") {
        let b = num(b)?;
        (num(a)?, b.checked_sub(1).ok_or("empty seed range")?)
    } else {
        let n = num(s)?;
        (n, n)
    };
    if last < first {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(SeedRange { first, last })
}

/// Parsed `--set` overrides, applied to the simulation config or, for keys
/// under `robot.`, to the scenario's robot description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides(pub BTreeMap<String, Value>);

impl Overrides {
    pub fn parse(items: &[String]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for item in items {
            let (k, v) = item.split_once('=').ok_or_else(|| CliError::Config(format!("override `{item}` is not KEY=VALUE")))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("override `{item}` has an empty key")));
            }
            let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
            map.insert(key.to_string(), value);
        }
        Ok(Overrides(map))
    }

    /// Applies every override; unknown keys and ill-typed values are errors.
    pub fn apply(&self, scenario: &mut ScenarioConfig, cfg: &mut SimConfig) -> Result<(), CliError> {
        let mut sim = serde_json::to_value(&*cfg).expect("config serializes");
        let mut robot = serde_json::to_value(&scenario.robot).expect("robot serializes");
        for (key, value) in &self.0 {
            let (doc, path) = match key.strip_prefix("robot.") {
                Some(rest) => (&mut robot, rest),
                None => (&mut sim, key.as_str()),
            };
            let slot = path
                .split('.')
                .try_fold(doc, |node, part| match node {
                    Value::Object(m) => m.get_mut(part),
                    Value::Array(a) => part.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
                    _ => None,
                })
                .ok_or_else(|| CliError::Config(format!("unknown setting `{key}`")))?;
            *slot = value.clone();
        }
        *cfg = serde_json::from_value(sim).map_err(|e| CliError::Config(format!("bad override value: {e}")))?;
        scenario.robot = serde_json::from_value(robot).map_err(|e| CliError::Config(format!("bad robot override: {e}")))?;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !scenario.robot.is_valid() {
            return Err(CliError::Config("robot parameters invalid after overrides".into()));
        }
        Ok(())
    }
}

/// Everything a trial needs, resolved once per command.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scenario: ScenarioConfig,
    pub scenario_path: PathBuf,
    pub cfg: SimConfig,
    pub overrides: Overrides,
}

impl Setup {
    pub fn load(common: &Common) -> Result<Self, CliError> {
        let mut scenario = ScenarioConfig::load(&common.scenario).map_err(|e| CliError::Config(format!("cannot load scenario: {e}")))?;
        let mut cfg = SimConfig::default();
        let overrides = Overrides::parse(&common.overrides)?;
        overrides.apply(&mut scenario, &mut cfg)?;
        Ok(Setup { scenario, scenario_path: common.scenario.clone(), cfg, overrides })
    }

    pub fn task(&self, seed: u64, mode: Mode) -> TaskSpec {
        TaskSpec::random(seed, self.scenario.slots.len(), mode)
    }

    pub fn run(&self, seed: u64, mode: Mode) -> Result<(TaskSpec, TrialMetrics), CliError> {
        let task = self.task(seed, mode);
        let m = run_trial(&self.scenario, &task, seed, &self.cfg)?;
        Ok((task, m))
    }
}

/// Contents of `<scenario>_<seed>_<mode>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario_path: String,
    pub overrides: Overrides,
    pub objects: Vec<usize>,
    pub drops: Vec<usize>,
    pub summary: TrialSummary,
}

pub fn trial_stem(scenario: &str, seed: u64, mode: Mode) -> String {
    format!("{scenario}_{seed}_{mode}")
}

/// Writes the JSON summary and CSV time series of one trial.
pub fn write_trial(setup: &Setup, out: &Path, task: &TaskSpec, m: &TrialMetrics) -> Result<TrialRecord, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let summary = m.summary();
    let mode = summary.mode.unwrap_or(task.mode);
    let stem = trial_stem(&setup.scenario.name, summary.seed, mode);
    let record = TrialRecord {
        scenario_path: setup.scenario_path.display().to_string(),
        overrides: setup.overrides.clone(),
        objects: task.objects.clone(),
        drops: task.drops.clone(),
        summary,
    };
    let json = out.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&record).expect("record serializes")).map_err(io_err(&json))?;
    let csv = out.join(format!("{stem}.csv"));
    fs::write(&csv, m.to_csv()).map_err(io_err(&csv))?;
    Ok(record)
}

pub fn summary_line(s: &TrialSummary) -> String {
    let mode = s.mode.map_or("?".to_string(), |m| m.to_string());
    let status = match s.failure {
        None if s.success => "success".to_string(),
        Some(cause) => format!("failure ({cause})"),
        None => "failure".to_string(),
    };
    let fmt = |x: Option<f64>| x.map_or("n/a".into(), |v| format!("{v:.3} m"));
    format!(
        "{} seed {} {}: {} task_time={:.2} s min_ee_clearance={} min_base_clearance={}",
        s.scenario,
        s.seed,
        mode,
        status,
        s.task_time,
        fmt(s.min_ee_obstacle_dist),
        fmt(s.min_base_clearance)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Stats { mean: v.iter().sum::<f64>() / n as f64, median, min: v[0], max: v[n - 1] })
    }
}

/// Batch aggregate. Task-time statistics cover successful trials only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenario: String,
    pub mode: Mode,
    pub overrides: Overrides,
    pub count: usize,
    pub success_count: usize,
    pub task_time: Option<Stats>,
    pub trials: Vec<TrialSummary>,
}

impl Aggregate {
    pub fn from_summaries(scenario: &str, mode: Mode, overrides: Overrides, mut trials: Vec<TrialSummary>) -> Self {
        trials.sort_by_key(|t| t.seed);
        let times: Vec<f64> = trials.iter().filter(|t| t.success).map(|t| t.task_time).collect();
        Aggregate {
            scenario: scenario.to_string(),
            mode,
            overrides,
            count: trials.len(),
            success_count: times.len(),
            task_time: Stats::of(&times),
            trials,
        }
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let n = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Config(e.to_string()))
}

/// Runs `seeds` × `modes` in parallel and writes every trial's files.
fn run_many(setup: &Setup, out: &Path, seeds: SeedRange, modes: &[Mode], workers: Option<usize>) -> Result<Vec<TrialRecord>, CliError> {
    let jobs: Vec<(u64, Mode)> = seeds.seeds().flat_map(|s| modes.iter().map(move |&m| (s, m))).collect();
    let records = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(seed, mode)| {
                let (task, m) = setup.run(seed, mode)?;
                let rec = write_trial(setup, out, &task, &m)?;
                eprintln!("{}", summary_line(&rec.summary));
                Ok(rec)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    Ok(records)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializes")).map_err(io_err(path))
}

pub fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let setup = Setup::load(&args.common)?;
    let (task, m) = setup.run(args.seed, args.mode)?;
    let rec = write_trial(&setup, &args.common.out, &task, &m)?;
    println!("{}", summary_line(&rec.summary));
    Ok(if rec.summary.success { 0 } else { EXIT_TASK_FAILURE })
}

pub fn batch_path(out: &Path, scenario: &str, mode: Mode) -> PathBuf {
    out.join(format!("{scenario}_{mode}_aggregate.json"))
}

pub fn cmd_batch(args: &BatchArgs) -> Result<i32, CliError> {
    let setup = Setup::load(&args.common)?;
    let out = &args.common.out;
    let records = run_many(&setup, out, args.seeds, &[args.mode], args.workers)?;
    let agg = Aggregate::from_summaries(&setup.scenario.name, args.mode, setup.overrides.clone(), records.into_iter().map(|r| r.summary).collect());
    write_json(&batch_path(out, &setup.scenario.name, args.mode), &agg)?;
    println!("{}", aggregate_line(&agg));
    Ok(0)
}

pub fn aggregate_line(a: &Aggregate) -> String {
    let times = a.task_time.map_or("no successful trials".into(), |s| {
        format!("task time mean {:.2} s, median {:.2} s, min {:.2} s, max {:.2} s", s.mean, s.median, s.min, s.max)
    });
    format!("{} {}: {}/{} succeeded; {}", a.scenario, a.mode, a.success_count, a.count, times)
}

/// One seed of a paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub seed: u64,
    pub a_success: bool,
    pub a_time: f64,
    pub b_success: bool,
    pub b_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub mode_a: Mode,
    pub mode_b: Mode,
    pub overrides: Overrides,
    pub rows: Vec<PairRow>,
    /// Seeds where both modes succeeded.
    pub paired: usize,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    /// `100·(mean_b − mean_a)/mean_b` over the paired seeds.
    pub improvement_percent: Option<f64>,
}

impl Comparison {
    pub fn new(scenario: &str, mode_a: Mode, mode_b: Mode, overrides: Overrides, a: &[TrialSummary], b: &[TrialSummary]) -> Self {
        let mut rows: Vec<PairRow> = a
            .iter()
            .filter_map(|x| {
                let y = b.iter().find(|y| y.seed == x.seed)?;
                Some(PairRow { seed: x.seed, a_success: x.success, a_time: x.task_time, b_success: y.success, b_time: y.task_time })
            })
            .collect();
        rows.sort_by_key(|r| r.seed);
        let both: Vec<&PairRow> = rows.iter().filter(|r| r.a_success && r.b_success).collect();
        let mean = |f: fn(&PairRow) -> f64| (!both.is_empty()).then(|| both.iter().map(|r| f(r)).sum::<f64>() / both.len() as f64);
        let mean_a = mean(|r| r.a_time);
        let mean_b = mean(|r| r.b_time);
        let improvement_percent = mean_a.zip(mean_b).map(|(a, b)| 100.0 * (b - a) / b);
        Comparison { scenario: scenario.into(), mode_a, mode_b, overrides, paired: both.len(), rows, mean_a, mean_b, improvement_percent }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("seed,{a}_success,{a}_task_time,{b}_success,{b}_task_time\n", a = self.mode_a, b = self.mode_b);
        for r in &self.rows {
            s.push_str(&format!("{},{},{:?},{},{:?}\n", r.seed, r.a_success, r.a_time, r.b_success, r.b_time));
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:>6} {:>12} {:>12}\n", "seed", self.mode_a.to_string(), self.mode_b.to_string());
        let cell = |ok: bool, t: f64| if ok { format!("{t:.2}") } else { "failed".into() };
        for r in &self.rows {
            s.push_str(&format!("{:>6} {:>12} {:>12}\n", r.seed, cell(r.a_success, r.a_time), cell(r.b_success, r.b_time)));
        }
        match (self.mean_a, self.mean_b, self.improvement_percent) {
            (Some(a), Some(b), Some(p)) => s.push_str(&format!(
                "{:>6} {:>12.2} {:>12.2}\nimprovement of {} over {}: {:.1} % ({} paired seeds)\n",
                "mean", a, b, self.mode_a, self.mode_b, p, self.paired
            )),
            _ => s.push_str("no seed succeeded in both modes\n"),
        }
        s
    }
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32, CliError> {
    let setup = Setup::load(&args.common)?;
    let [a, b] = args.modes[..] else {
        return Err(CliError::Config("--modes takes exactly two modes".into()));
    };
    let out = &args.common.out;
    let modes: Vec<Mode> = if a == b { vec![a] } else { vec![a, b] };
    let records = run_many(&setup, out, args.seeds, &modes, args.workers)?;
    let pick = |m: Mode| records.iter().filter(|r| r.summary.mode == Some(m)).map(|r| r.summary.clone()).collect::<Vec<_>>();
    let (sa, sb) = (pick(a), pick(b));
    let name = &setup.scenario.name;
    for (m, s) in [(a, &sa), (b, &sb)] {
        write_json(&batch_path(out, name, m), &Aggregate::from_summaries(name, m, setup.overrides.clone(), s.clone()))?;
    }
    let cmp = Comparison::new(name, a, b, setup.overrides.clone(), &sa, &sb);
    let csv = out.join(format!("{name}_{a}_vs_{b}.csv"));
    fs::write(&csv, cmp.to_csv()).map_err(io_err(&csv))?;
    write_json(&out.join(format!("{name}_{a}_vs_{b}.json")), &cmp)?;
    print!("{}", cmp.table());
    Ok(0)
}

/// Reads every per-trial record in `dir`.
pub fn load_records(dir: &Path) -> Result<Vec<TrialRecord>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            // Aggregates and comparisons live in the same directory.
            if let Ok(rec) = serde_json::from_str::<TrialRecord>(&text) {
                out.push(rec);
            }
        }
    }
    out.sort_by(|a, b| (&a.summary.scenario, a.summary.mode.map(|m| m.to_string()), a.summary.seed).cmp(&(&b.summary.scenario, b.summary.mode.map(|m| m.to_string()), b.summary.seed)));
    Ok(out)
}

/// One aggregate per (scenario, mode) found in `dir`.
pub fn report(dir: &Path) -> Result<Vec<Aggregate>, CliError> {
    let mut groups: BTreeMap<(String, String), (Mode, Overrides, Vec<TrialSummary>)> = BTreeMap::new();
    for rec in load_records(dir)? {
        let Some(mode) = rec.summary.mode else { continue };
        let e = groups.entry((rec.summary.scenario.clone(), mode.to_string())).or_insert_with(|| (mode, rec.overrides.clone(), Vec::new()));
        e.2.push(rec.summary);
    }
    Ok(groups.into_iter().map(|((scenario, _), (mode, ov, trials))| Aggregate::from_summaries(&scenario, mode, ov, trials)).collect())
}

pub fn cmd_report(args: &ReportArgs) -> Result<i32, CliError> {
    let aggs = report(&args.out)?;
    if aggs.is_empty() {
        return Err(CliError::Config(format!("no trial records in {}", args.out.display())));
    }
    for a in &aggs {
        println!("{}", aggregate_line(a));
    }
    write_json(&args.out.join("report.json"), &aggs)?;
    Ok(0)
}

/// Dispatches a parsed command line and maps errors to exit codes.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG_ERROR
        }
    }
}
