//! Solver adapters and the `solvers.toml` registry.
//!
//! ```toml
//! [solver.gecode]
//! command = "fzn-gecode {options} {instance}"
//! options = "-p 1"
//! pause = true
//! bound_injection = false
//!
//! [solver.chuffed]
//! command = "fzn-chuffed {instance} --ub {obj_bound}"
//! bound_injection = true
//! no_bound = "1000000000"
//! restart_time = 10
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INSTANCE_PLACEHOLDER: &str = "{instance}";
pub const BOUND_PLACEHOLDER: &str = "{obj_bound}";
pub const OPTIONS_PLACEHOLDER: &str = "{options}";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid registry: {0}")]
    Toml(String),
    #[error("solver {solver}: {message}")]
    Invalid { solver: String, message: String },
    #[error("no adapter registered for solver {0}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub supports_pause_resume: bool,
    pub supports_bound_injection: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Self {
            supports_pause_resume: true,
            supports_bound_injection: true,
        }
    }
}

fn yes() -> bool {
    true
}

/// One `[solver.<id>]` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub command: String,
    #[serde(default)]
    pub bound_injection: bool,
    /// Substituted for `{obj_bound}` when no bound is known yet.
    #[serde(default)]
    pub no_bound: String,
    #[serde(default = "yes")]
    pub pause: bool,
    #[serde(default)]
    pub wait_time: Option<f64>,
    #[serde(default)]
    pub restart_time: Option<f64>,
    #[serde(default)]
    pub options: String,
    /// Flag added to `{options}` when search annotations are ignored.
    #[serde(default)]
    pub free_search_flag: Option<String>,
    #[serde(default)]
    pub objective_pattern: Option<String>,
}

impl SolverSpec {
    pub fn validate(&self, solver: &str) -> Result<(), RegistryError> {
        let invalid = |message: &str| RegistryError::Invalid {
            solver: solver.to_string(),
            message: message.to_string(),
        };
        if !self.command.contains(INSTANCE_PLACEHOLDER) {
            return Err(invalid("command template lacks {instance}"));
        }
        if self.command.contains(BOUND_PLACEHOLDER) != self.bound_injection {
            return Err(invalid("{obj_bound} must appear in the command iff bound_injection = true"));
        }
        if let Some(p) = &self.objective_pattern {
            regex::Regex::new(p).map_err(|e| invalid(&format!("objective_pattern: {e}")))?;
        }
        for (name, v) in [("wait_time", self.wait_time), ("restart_time", self.restart_time)] {
            if v.is_some_and(|x| !(x >= 0.0)) {
                return Err(invalid(&format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_pause_resume: self.pause,
            supports_bound_injection: self.bound_injection,
        }
    }

    /// The shell command line for one launch.
    pub fn render(&self, instance: &str, bound: Option<f64>, free_search: bool) -> String {
        let mut options = self.options.clone();
        if free_search {
            if let Some(flag) = &self.free_search_flag {
                if !options.is_empty() {
                    options.push(' ');
                }
                options.push_str(flag);
            }
        }
        let bound = bound.map_or_else(|| self.no_bound.clone(), fmt_bound);
        let mut cmd = self
            .command
            .replace(INSTANCE_PLACEHOLDER, &shell_quote(instance))
            .replace(BOUND_PLACEHOLDER, &bound);
        if cmd.contains(OPTIONS_PLACEHOLDER) {
            cmd = cmd.replace(OPTIONS_PLACEHOLDER, &options);
        } else if !options.is_empty() {
            let _ = write!(cmd, " {options}");
        }
        cmd
    }
}

fn fmt_bound(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn shell_quote(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || "/._-+=:,".contains(c)) {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterBackend {
    ExternalProcess(SolverSpec),
    TraceReplay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverAdapter {
    pub solver_id: String,
    pub capabilities: Capabilities,
    pub backend: AdapterBackend,
}

#[derive(Debug, Default, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    solver: BTreeMap<String, SolverSpec>,
}

/// Parsed `[solver.*]` sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub solvers: BTreeMap<String, SolverSpec>,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile = toml::from_str(text).map_err(|e| RegistryError::Toml(e.to_string()))?;
        for (id, spec) in &file.solver {
            spec.validate(id)?;
        }
        Ok(Self { solvers: file.solver })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Process adapters for `portfolio`, in portfolio order.
    pub fn adapters(&self, portfolio: &[String]) -> Result<Vec<SolverAdapter>, RegistryError> {
        portfolio
            .iter()
            .map(|id| {
                let spec = self.solvers.get(id).ok_or_else(|| RegistryError::Missing(id.clone()))?;
                Ok(SolverAdapter {
                    solver_id: id.clone(),
                    capabilities: spec.capabilities(),
                    backend: AdapterBackend::ExternalProcess(spec.clone()),
                })
            })
            .collect()
    }
}
