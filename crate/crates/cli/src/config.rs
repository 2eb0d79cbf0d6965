//! Layered configuration: defaults < config file < environment < flags.
//!
//! The config file is TOML with an `[executor]` table and optional
//! `[solver.<id>]` adapter tables in the registry format.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sunny_core::executor::{ExecutorConfig, Registry, SolverOverrides};
use sunny_core::scheduler::Schedule;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutorSection {
    pub kb: Option<PathBuf>,
    pub cores: Option<usize>,
    pub timeout: Option<f64>,
    pub wait_time: Option<f64>,
    pub restart_time: Option<f64>,
    pub k: Option<usize>,
    pub anytime: Option<bool>,
    pub memory_limit_mb: Option<u64>,
    pub ignore_search_annotations: Option<bool>,
    pub simulated_overhead: Option<f64>,
    pub static_schedule: Option<Schedule>,
}

#[derive(Debug, Default)]
pub struct ConfigFile {
    pub executor: ExecutorSection,
    pub registry: Registry,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Sections {
    #[serde(default)]
    executor: ExecutorSection,
    /// Validated separately by the registry parser.
    #[serde(default, rename = "solver")]
    _solver: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let sections: Sections =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let registry = Registry::parse(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(Self {
            executor: sections.executor,
            registry,
        })
    }
}

/// Flag or environment values; `None` falls through to the config file.
#[derive(Debug, Default, Clone)]
pub struct ExecutorArgs {
    pub cores: Option<usize>,
    pub timeout: Option<f64>,
    pub wait_time: Option<f64>,
    pub restart_time: Option<f64>,
    pub k: Option<usize>,
    pub no_anytime: bool,
    pub mem_limit: Option<u64>,
    pub ignore_search_annotations: bool,
    pub overhead: Option<f64>,
    pub static_schedule: Option<PathBuf>,
}

pub fn read_schedule(path: &Path) -> Result<Schedule, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read schedule {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("schedule {}: {e}", path.display())))
}

pub fn merge(args: &ExecutorArgs, file: &ConfigFile) -> Result<ExecutorConfig, CliError> {
    let d = ExecutorConfig::default();
    let f = &file.executor;
    let static_schedule = match &args.static_schedule {
        Some(p) => read_schedule(p)?,
        None => f.static_schedule.clone().unwrap_or(d.static_schedule),
    };
    let overrides = file
        .registry
        .solvers
        .iter()
        .filter(|(_, s)| s.wait_time.is_some() || s.restart_time.is_some())
        .map(|(id, s)| {
            let o = SolverOverrides {
                wait_time: s.wait_time,
                restart_time: s.restart_time,
            };
            (id.clone(), o)
        })
        .collect();
    let cfg = ExecutorConfig {
        cores: args.cores.or(f.cores).unwrap_or(d.cores),
        timeout: args.timeout.or(f.timeout).unwrap_or(d.timeout),
        wait_time: args.wait_time.or(f.wait_time).unwrap_or(d.wait_time),
        restart_time: args.restart_time.or(f.restart_time).unwrap_or(d.restart_time),
        static_schedule,
        anytime: if args.no_anytime { false } else { f.anytime.unwrap_or(d.anytime) },
        memory_limit_mb: args.mem_limit.or(f.memory_limit_mb),
        ignore_search_annotations: args.ignore_search_annotations
            || f.ignore_search_annotations.unwrap_or(d.ignore_search_annotations),
        k: args.k.or(f.k).unwrap_or(d.k),
        overrides,
        simulated_overhead: args.overhead.or(f.simulated_overhead).unwrap_or(d.simulated_overhead),
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}
