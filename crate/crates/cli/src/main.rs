//! `sunny-port`: parallel portfolio solving, scheduling and evaluation.
//!
//! Results go to stdout as JSON (or CSV where requested), logs to stderr.
//! Exit codes: 0 solved (SAT/OPT/UNS/UNB) or command succeeded, 1 unknown,
//! 2 usage error, 3 runtime error.

mod config;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sunny_core::bench::{self, baseline_strategies, FoldPlan, DEFAULT_FOLDS};
use sunny_core::executor::{self, ExecutorConfig, ProcessBackend, Registry, ReplayBackend};
use sunny_core::kb::{self, KnowledgeBase, Neighbourhood, Outcome};
use sunny_core::par::ExecMode;
use sunny_core::scheduler::{parallelise, sunny_schedule};

use config::{ConfigFile, ExecutorArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, missing inputs, unreadable or malformed files.
    Usage(String),
    /// Failures after the inputs were accepted.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "sunny-port", version, about = "Parallel algorithm portfolio for constraint problems")]
struct Cli {
    /// TOML config file with an [executor] table and [solver.<id>] adapters
    #[arg(long, global = true, env = "SUNNY_PORT_CONFIG")]
    config: Option<PathBuf>,

    /// Log verbosity on stderr (-v info, -vv debug, -vvv trace) [default: warnings only]
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance of the knowledge base with the parallel portfolio
    Solve(SolveArgs),
    /// Print the parallel schedule predicted for an instance or a neighbourhood
    Schedule(ScheduleArgs),
    /// Per-solver averages and VBS/VPS rows for a runtimes file
    Metrics(MetricsArgs),
    /// Cross-validate the portfolio on a knowledge base by trace replay
    Bench(BenchArgs),
    /// Knowledge base utilities
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Load a knowledge base and print a one-line summary
    Validate(KbArg),
}

#[derive(Args)]
struct KbArg {
    /// Knowledge base directory holding instances.csv and runtimes.csv [default: [executor] kb from --config]
    #[arg(long, env = "SUNNY_PORT_KB")]
    kb: Option<PathBuf>,
}

#[derive(Args)]
struct ExecFlags {
    /// Cores to use [default: detected cores]
    #[arg(long, env = "SUNNY_PORT_CORES")]
    cores: Option<usize>,
    /// Solving timeout T in seconds [default: 1800]
    #[arg(long, env = "SUNNY_PORT_TIMEOUT")]
    timeout: Option<f64>,
    /// Grace period T_w after a solution before a slot may end [default: 2]
    #[arg(long, env = "SUNNY_PORT_WAIT_TIME")]
    wait_time: Option<f64>,
    /// Quiet period T_r before a solver is restarted with a better bound [default: 5]
    #[arg(long, env = "SUNNY_PORT_RESTART_TIME")]
    restart_time: Option<f64>,
    /// Static pre-solving schedule, a JSON list of [solver, seconds] pairs [default: none]
    #[arg(long, env = "SUNNY_PORT_STATIC_SCHEDULE")]
    static_schedule: Option<PathBuf>,
    /// Neighbourhood size [default: 70]
    #[arg(long, env = "SUNNY_PORT_K")]
    k: Option<usize>,
    /// Report UNK instead of the best non-proven outcome at the timeout [default: anytime]
    #[arg(long)]
    no_anytime: bool,
    /// Per-solver address space limit in MB [default: unlimited]
    #[arg(long, env = "SUNNY_PORT_MEM_LIMIT")]
    mem_limit: Option<u64>,
    /// Ask solvers to ignore search annotations [default: off]
    #[arg(long)]
    ignore_search_annotations: bool,
    /// Simulated neighbourhood overhead in seconds under trace replay [default: 5]
    #[arg(long, env = "SUNNY_PORT_OVERHEAD")]
    overhead: Option<f64>,
}

impl ExecFlags {
    fn to_args(&self) -> ExecutorArgs {
        ExecutorArgs {
            cores: self.cores,
            timeout: self.timeout,
            wait_time: self.wait_time,
            restart_time: self.restart_time,
            k: self.k,
            no_anytime: self.no_anytime,
            mem_limit: self.mem_limit,
            ignore_search_annotations: self.ignore_search_annotations,
            overhead: self.overhead,
            static_schedule: self.static_schedule.clone(),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance id in the knowledge base; its features drive the k-NN
    instance: String,
    #[command(flatten)]
    kb: KbArg,
    /// Model file handed to real solver processes; without it the instance is replayed from its records [default: replay]
    #[arg(long)]
    model: Option<PathBuf>,
    /// Solver registry (TOML) for process mode [default: [solver.*] tables of --config]
    #[arg(long, requires = "model", env = "SUNNY_PORT_SOLVERS")]
    solvers: Option<PathBuf>,
    #[command(flatten)]
    exec: ExecFlags,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Instance id whose k nearest neighbours (excluding itself) are used
    #[arg(required_unless_present = "neighbours")]
    instance: Option<String>,
    #[command(flatten)]
    kb: KbArg,
    /// Explicit comma-separated neighbourhood instead of k-NN
    #[arg(long, value_delimiter = ',', conflicts_with = "instance")]
    neighbours: Option<Vec<String>>,
    /// Cores to schedule for [default: detected cores]
    #[arg(long, env = "SUNNY_PORT_CORES")]
    cores: Option<usize>,
    /// Time budget in seconds [default: 1800]
    #[arg(long, env = "SUNNY_PORT_TIMEOUT")]
    timeout: Option<f64>,
    /// Neighbourhood size [default: 70]
    #[arg(long, env = "SUNNY_PORT_K")]
    k: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct MetricsArgs {
    /// Runtimes CSV
    runtimes: PathBuf,
    /// Instances CSV [default: instances.csv next to RUNTIMES]
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Core counts for the VPS rows
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    cores: Vec<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    kb: KbArg,
    /// Comma-separated core counts
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    cores: Vec<usize>,
    /// Fold assignment seed
    #[arg(long, default_value_t = 0, env = "SUNNY_PORT_SEED")]
    seed: u64,
    /// Number of folds
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Write the full JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the summary table as CSV to FILE, or to stdout with "-"
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Evaluate instances on one thread
    #[arg(long)]
    sequential: bool,
    /// Grace period T_w after a solution before a slot may end [default: 2]
    #[arg(long, env = "SUNNY_PORT_WAIT_TIME")]
    wait_time: Option<f64>,
    /// Quiet period T_r before a solver is restarted with a better bound [default: 5]
    #[arg(long, env = "SUNNY_PORT_RESTART_TIME")]
    restart_time: Option<f64>,
    /// Neighbourhood size [default: 70]
    #[arg(long, env = "SUNNY_PORT_K")]
    k: Option<usize>,
    /// Simulated neighbourhood overhead in seconds [default: 5]
    #[arg(long, env = "SUNNY_PORT_OVERHEAD")]
    overhead: Option<f64>,
}

/// What a command leaves on stdout and how the process exits.
enum Output {
    Json(serde_json::Value, u8),
    Text(String),
    Nothing,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            print_error(&e.render().to_string());
            return ExitCode::from(2);
        }
    };
    init_logging(cli.verbose);
    let result = ConfigFile::load(cli.config.as_deref()).and_then(|file| run(cli.command, &file));
    match result {
        Ok(Output::Json(v, code)) => {
            emit(&format!("{}\n", serde_json::to_string_pretty(&v).expect("JSON values serialize")));
            ExitCode::from(code)
        }
        Ok(Output::Text(s)) => {
            emit(&s);
            ExitCode::SUCCESS
        }
        Ok(Output::Nothing) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{}", e.message());
            print_error(e.message());
            ExitCode::from(e.code())
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SUNNY_PORT_LOG")
        .target(env_logger::Target::Stderr)
        .init();
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn print_error(message: &str) {
    emit(&format!("{}\n", serde_json::json!({ "error": message.trim_end() })));
}

fn run(command: Command, file: &ConfigFile) -> Result<Output, CliError> {
    match command {
        Command::Solve(a) => solve(a, file),
        Command::Schedule(a) => schedule(a, file),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => run_bench(a, file),
        Command::Kb {
            command: KbCommand::Validate(a),
        } => {
            let (kb, _) = load_kb(&a, file)?;
            Ok(Output::Text(format!(
                "{} instances, {} solvers, T={}\n",
                kb.len(),
                kb.portfolio().len(),
                kb.timeout()
            )))
        }
    }
}

fn load_kb(arg: &KbArg, file: &ConfigFile) -> Result<(KnowledgeBase, PathBuf), CliError> {
    let dir = arg.kb.clone().or_else(|| file.executor.kb.clone()).ok_or_else(|| {
        CliError::Usage("no knowledge base: pass --kb DIR, set SUNNY_PORT_KB or [executor] kb".into())
    })?;
    let kb = kb::load_dir(&dir).map_err(|e| CliError::Usage(e.to_string()))?;
    log::info!("loaded {} instances from {}", kb.len(), dir.display());
    Ok((kb, dir))
}

fn json<T: Serialize>(v: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn solve(a: SolveArgs, file: &ConfigFile) -> Result<Output, CliError> {
    let (kb, _) = load_kb(&a.kb, file)?;
    let cfg = config::merge(&a.exec.to_args(), file)?;
    let index = kb
        .instance_index(&a.instance)
        .ok_or_else(|| CliError::Usage(format!("unknown instance {}", a.instance)))?;
    let problem = &kb.instances()[index];
    let training = kb.without(&a.instance);
    let result = match &a.model {
        None => {
            let backend = ReplayBackend::new(&kb, index, cfg.simulated_overhead);
            executor::solve(problem, &cfg, &training, backend)
        }
        Some(model) => {
            let registry = match &a.solvers {
                Some(path) => Registry::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
                None => file.registry.clone(),
            };
            if registry.solvers.is_empty() {
                return Err(CliError::Usage("process mode needs solver adapters: pass --solvers FILE".into()));
            }
            let adapters = registry.adapters(kb.portfolio()).map_err(|e| CliError::Usage(e.to_string()))?;
            let backend = ProcessBackend::new(adapters, model.display().to_string(), problem.kind)
                .memory_limit_mb(cfg.memory_limit_mb)
                .free_search(cfg.ignore_search_annotations);
            executor::solve(problem, &cfg, &training, backend)
        }
    }
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let code = if result.outcome == Outcome::Unk { 1 } else { 0 };
    Ok(Output::Json(json(&result)?, code))
}

fn schedule(a: ScheduleArgs, file: &ConfigFile) -> Result<Output, CliError> {
    let (kb, _) = load_kb(&a.kb, file)?;
    let args = ExecutorArgs {
        cores: a.cores,
        timeout: a.timeout,
        k: a.k,
        ..ExecutorArgs::default()
    };
    let cfg: ExecutorConfig = config::merge(&args, file)?;
    let (nbh, training) = match (&a.instance, a.neighbours) {
        (Some(id), _) => {
            let p = kb
                .instance(id)
                .ok_or_else(|| CliError::Usage(format!("unknown instance {id}")))?;
            let training = kb.without(id);
            let nbh = kb::neighbours_of_kind(p, &training, cfg.k).map_err(|e| CliError::Runtime(e.to_string()))?;
            (nbh, training)
        }
        (None, Some(ids)) => (Neighbourhood::from_ids("query", ids), kb),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let sigma = sunny_schedule(&nbh, &training, cfg.timeout).map_err(|e| CliError::Usage(e.to_string()))?;
    let parallel = parallelise(&sigma, cfg.cores, cfg.timeout).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Output::Json(json(&parallel)?, 0))
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    strategy: &'a str,
    proven: f64,
    time: f64,
    score: Option<f64>,
    area: Option<f64>,
}

fn metrics(a: MetricsArgs) -> Result<Output, CliError> {
    let instances = match a.instances {
        Some(p) => p,
        None => sibling(&a.runtimes, kb::INSTANCES_FILE),
    };
    let kb = kb::load_kb(&instances, &a.runtimes).map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = baseline_strategies(&kb, &a.cores).map_err(|e| CliError::Usage(e.to_string()))?;
    match a.format {
        Format::Json => {
            let out: Vec<MetricsRow> = rows
                .iter()
                .map(|r| MetricsRow {
                    strategy: &r.name,
                    proven: r.aggregate.proven,
                    time: r.aggregate.time,
                    score: r.aggregate.score,
                    area: r.aggregate.area,
                })
                .collect();
            Ok(Output::Json(json(&out)?, 0))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.2}"));
            let io = |e: csv::Error| CliError::Runtime(e.to_string());
            w.write_record(["strategy", "proven (%)", "time (s)", "score x 100", "area (s)"]).map_err(io)?;
            for r in &rows {
                let g = &r.aggregate;
                w.write_record([
                    r.name.clone(),
                    format!("{:.2}", g.proven),
                    format!("{:.2}", g.time),
                    opt(g.score),
                    opt(g.area),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(Output::Text(String::from_utf8(bytes).expect("CSV of UTF-8 fields")))
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn run_bench(a: BenchArgs, file: &ConfigFile) -> Result<Output, CliError> {
    let (kb, _) = load_kb(&a.kb, file)?;
    let args = ExecutorArgs {
        wait_time: a.wait_time,
        restart_time: a.restart_time,
        k: a.k,
        overhead: a.overhead,
        ..ExecutorArgs::default()
    };
    let cfg = config::merge(&args, file)?;
    let plan = FoldPlan::random(kb.len(), a.folds, a.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let mode = if a.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let report = bench::cross_validate_with_plan(&kb, &plan, &a.cores, &cfg, mode).map_err(|e| match e {
        bench::BenchError::Cores | bench::BenchError::TooSmall { .. } => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    })?;
    let table = report.to_csv();
    let csv_to_stdout = a.csv.as_deref() == Some(Path::new("-"));
    if let Some(path) = a.csv.as_deref().filter(|_| !csv_to_stdout) {
        write_file(path, table.as_bytes())?;
    }
    let value = json(&report)?;
    if let Some(path) = &a.out {
        let text = serde_json::to_string_pretty(&value).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(path, text.as_bytes())?;
    }
    Ok(match (csv_to_stdout, &a.out) {
        (true, _) => Output::Text(table),
        (false, None) => Output::Json(value, 0),
        (false, Some(_)) => Output::Nothing,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}
