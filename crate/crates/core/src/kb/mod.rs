//! Knowledge base: training instances, their feature vectors and the
//! per-solver runtime records the scheduler and the simulator replay.

mod io;
mod knn;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dir, load_kb, write_instances, write_runtimes, INSTANCES_FILE, RUNTIMES_FILE};
pub use knn::{distance, neighbours, neighbours_of_kind, normalize, Neighbour, Neighbourhood};

/// Default neighbourhood size.
pub const DEFAULT_K: usize = 70;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("missing runtime record for instance {instance}, solver {solver}")]
    Incomplete { instance: String, solver: String },
    #[error("instance {instance}, solver {solver}: {message}")]
    InvalidRecord {
        instance: String,
        solver: String,
        message: String,
    },
    #[error("instance {id}: {message}")]
    InvalidInstance { id: String, message: String },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown instance {0}")]
    UnknownInstance(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "CSP")]
    Csp,
    #[serde(rename = "COP")]
    Cop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
    None,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
            Direction::None => false,
        }
    }

    pub fn better_or_equal(self, a: f64, b: f64) -> bool {
        a == b || self.better(a, b)
    }

    /// The better of two objective values.
    pub fn best(self, a: f64, b: f64) -> f64 {
        if self.better(b, a) {
            b
        } else {
            a
        }
    }
}

/// Solving outcome vocabulary shared by records, adapters and results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "SAT")]
    Sat,
    #[serde(rename = "UNS")]
    Uns,
    #[serde(rename = "UNK")]
    Unk,
    #[serde(rename = "OPT")]
    Opt,
    #[serde(rename = "UNB")]
    Unb,
}

impl Outcome {
    /// Outcomes that close the search: optimality, unsatisfiability, unboundedness.
    pub fn is_complete(self) -> bool {
        matches!(self, Outcome::Opt | Outcome::Uns | Outcome::Unb)
    }

    /// Whether the outcome settles the instance for a problem of `kind`.
    pub fn solves(self, kind: ProblemKind) -> bool {
        match kind {
            ProblemKind::Csp => matches!(self, Outcome::Sat | Outcome::Uns),
            ProblemKind::Cop => self.is_complete(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Sat => "SAT",
            Outcome::Uns => "UNS",
            Outcome::Unk => "UNK",
            Outcome::Opt => "OPT",
            Outcome::Unb => "UNB",
        };
        f.write_str(s)
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sat" => Ok(Outcome::Sat),
            "uns" => Ok(Outcome::Uns),
            "unk" => Ok(Outcome::Unk),
            "opt" => Ok(Outcome::Opt),
            "unb" => Ok(Outcome::Unb),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

/// One anytime improvement: objective value `v` found at `t` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub kind: ProblemKind,
    pub direction: Direction,
    pub features: Vec<f64>,
}

impl ProblemInstance {
    pub fn new(
        id: impl Into<String>,
        kind: ProblemKind,
        direction: Direction,
        features: Vec<f64>,
    ) -> Result<Self, KbError> {
        let id = id.into();
        let consistent = match kind {
            ProblemKind::Csp => direction == Direction::None,
            ProblemKind::Cop => direction != Direction::None,
        };
        if !consistent {
            return Err(KbError::InvalidInstance {
                id,
                message: format!("{kind:?} instance cannot have direction {direction:?}"),
            });
        }
        if let Some(bad) = features.iter().find(|f| !f.is_finite()) {
            return Err(KbError::InvalidInstance {
                id,
                message: format!("non-finite feature {bad}"),
            });
        }
        Ok(Self {
            id,
            kind,
            direction,
            features,
        })
    }

    pub fn csp(id: impl Into<String>, features: Vec<f64>) -> Self {
        Self::new(id, ProblemKind::Csp, Direction::None, features).expect("valid CSP instance")
    }

    pub fn cop(id: impl Into<String>, direction: Direction, features: Vec<f64>) -> Self {
        Self::new(id, ProblemKind::Cop, direction, features).expect("valid COP instance")
    }
}

/// How a solver behaves once it has been handed an objective bound at least
/// as good as `bound`. Times are measured from the (re)launch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedRun {
    pub bound: f64,
    pub outcome: Outcome,
    pub time: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub solver: String,
    pub outcome: Outcome,
    pub time: f64,
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_bound: Option<BoundedRun>,
}

impl SolverRecord {
    pub fn new(solver: impl Into<String>, outcome: Outcome, time: f64) -> Self {
        Self {
            solver: solver.into(),
            outcome,
            time,
            trace: Vec::new(),
            with_bound: None,
        }
    }

    pub fn with_trace(mut self, trace: Vec<TracePoint>) -> Self {
        self.trace = trace;
        self
    }

    /// Solving time under the timeout convention: `T` unless the record solves.
    pub fn solving_time(&self, kind: ProblemKind, timeout: f64) -> f64 {
        if self.solves(kind, timeout) {
            self.time
        } else {
            timeout
        }
    }

    pub fn solves(&self, kind: ProblemKind, timeout: f64) -> bool {
        self.outcome.solves(kind) && self.time < timeout
    }
}

/// Checks a trace for strictly increasing times and strictly improving values.
pub fn check_trace(trace: &[TracePoint], direction: Direction) -> Result<(), String> {
    for w in trace.windows(2) {
        if w[1].t <= w[0].t {
            return Err(format!("trace times not increasing at t={}", w[1].t));
        }
        if !direction.better(w[1].v, w[0].v) {
            return Err(format!("trace value {} does not improve on {}", w[1].v, w[0].v));
        }
    }
    if let Some(p) = trace.iter().find(|p| !p.t.is_finite() || p.t < 0.0 || !p.v.is_finite()) {
        return Err(format!("invalid trace point {}:{}", p.t, p.v));
    }
    Ok(())
}

fn check_record(rec: &SolverRecord, inst: &ProblemInstance, timeout: f64) -> Result<(), String> {
    check_run(rec.outcome, rec.time, &rec.trace, inst, timeout, false)?;
    if let Some(b) = &rec.with_bound {
        if inst.kind != ProblemKind::Cop {
            return Err("bound-conditioned run on a CSP instance".into());
        }
        check_run(b.outcome, b.time, &b.trace, inst, timeout, true)?;
        if let Some(p) = b.trace.iter().find(|p| !inst.direction.better(p.v, b.bound)) {
            return Err(format!(
                "bound-conditioned value {} not better than bound {}",
                p.v, b.bound
            ));
        }
    }
    Ok(())
}

fn check_run(
    outcome: Outcome,
    time: f64,
    trace: &[TracePoint],
    inst: &ProblemInstance,
    timeout: f64,
    bounded: bool,
) -> Result<(), String> {
    if !(0.0..=timeout).contains(&time) {
        return Err(format!("time {time} outside [0, {timeout}]"));
    }
    match outcome {
        Outcome::Opt | Outcome::Uns | Outcome::Unb if time >= timeout => {
            return Err(format!("{outcome} requires time < T, got {time}"))
        }
        Outcome::Unk if time != timeout => {
            return Err(format!("UNK requires time = T, got {time}"))
        }
        _ => {}
    }
    match inst.kind {
        ProblemKind::Csp => {
            if matches!(outcome, Outcome::Opt | Outcome::Unb) {
                return Err(format!("{outcome} is not a CSP outcome"));
            }
            if outcome == Outcome::Sat && time >= timeout {
                return Err(format!("SAT requires time < T, got {time}"));
            }
            if !trace.is_empty() {
                return Err("CSP records carry no objective trace".into());
            }
        }
        ProblemKind::Cop => {
            // a bounded OPT without solutions proves the bound itself optimal
            let needs_solution = match outcome {
                Outcome::Sat => true,
                Outcome::Opt => !bounded,
                _ => false,
            };
            if needs_solution && trace.is_empty() {
                return Err(format!("{outcome} record without any solution"));
            }
            if matches!(outcome, Outcome::Uns | Outcome::Unk) && !trace.is_empty() {
                return Err(format!("{outcome} record with solutions"));
            }
        }
    }
    check_trace(trace, inst.direction)?;
    if let Some(last) = trace.last() {
        if last.t > time {
            return Err(format!("trace point at {} after run end {time}", last.t));
        }
    }
    Ok(())
}

/// Per-feature min-max bounds over the training instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn is_constant(&self) -> bool {
        self.min == self.max
    }
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    instances: Vec<ProblemInstance>,
    index: HashMap<String, usize>,
    portfolio: Vec<String>,
    /// `records[instance][solver]`, solver in portfolio order.
    records: Vec<Vec<SolverRecord>>,
    timeout: f64,
    dims: usize,
    ranges: Vec<FeatureRange>,
}

impl KnowledgeBase {
    /// Builds and validates a knowledge base. `records` may come in any order;
    /// every (instance, portfolio solver) pair must appear exactly once.
    pub fn new(
        instances: Vec<ProblemInstance>,
        portfolio: Vec<String>,
        records: Vec<(String, SolverRecord)>,
        timeout: f64,
    ) -> Result<Self, KbError> {
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(KbError::InvalidInstance {
                id: String::new(),
                message: format!("timeout must be positive, got {timeout}"),
            });
        }
        let dims = instances.first().map_or(0, |i| i.features.len());
        let mut index = HashMap::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            if inst.features.len() != dims {
                return Err(KbError::Dimension {
                    expected: dims,
                    got: inst.features.len(),
                });
            }
            if index.insert(inst.id.clone(), i).is_some() {
                return Err(KbError::InvalidInstance {
                    id: inst.id.clone(),
                    message: "duplicate instance id".into(),
                });
            }
        }
        let solver_index: HashMap<&str, usize> = portfolio
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut slots: Vec<Vec<Option<SolverRecord>>> =
            vec![vec![None; portfolio.len()]; instances.len()];
        for (inst_id, rec) in records {
            let &i = index
                .get(&inst_id)
                .ok_or_else(|| KbError::UnknownInstance(inst_id.clone()))?;
            let &s = solver_index
                .get(rec.solver.as_str())
                .ok_or_else(|| KbError::InvalidRecord {
                    instance: inst_id.clone(),
                    solver: rec.solver.clone(),
                    message: "solver not in portfolio".into(),
                })?;
            check_record(&rec, &instances[i], timeout).map_err(|message| {
                KbError::InvalidRecord {
                    instance: inst_id.clone(),
                    solver: rec.solver.clone(),
                    message,
                }
            })?;
            if slots[i][s].replace(rec).is_some() {
                return Err(KbError::InvalidRecord {
                    instance: inst_id,
                    solver: portfolio[s].clone(),
                    message: "duplicate record".into(),
                });
            }
        }
        let mut table = Vec::with_capacity(instances.len());
        for (i, row) in slots.into_iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (s, rec) in row.into_iter().enumerate() {
                out.push(rec.ok_or_else(|| KbError::Incomplete {
                    instance: instances[i].id.clone(),
                    solver: portfolio[s].clone(),
                })?);
            }
            table.push(out);
        }
        let ranges = compute_ranges(&instances, dims);
        Ok(Self {
            instances,
            index,
            portfolio,
            records: table,
            timeout,
            dims,
            ranges,
        })
    }

    pub fn instances(&self) -> &[ProblemInstance] {
        &self.instances
    }

    pub fn instance(&self, id: &str) -> Option<&ProblemInstance> {
        self.index.get(id).map(|&i| &self.instances[i])
    }

    pub fn instance_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn portfolio(&self) -> &[String] {
        &self.portfolio
    }

    pub fn solver_index(&self, id: &str) -> Option<usize> {
        self.portfolio.iter().position(|s| s == id)
    }

    pub fn timeout(&self) -> f64 {
        self.timeout
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn ranges(&self) -> &[FeatureRange] {
        &self.ranges
    }

    /// Records of instance `i` in portfolio order.
    pub fn records(&self, i: usize) -> &[SolverRecord] {
        &self.records[i]
    }

    pub fn record(&self, instance: usize, solver: usize) -> &SolverRecord {
        &self.records[instance][solver]
    }

    pub fn record_by_id(&self, instance: &str, solver: &str) -> Option<&SolverRecord> {
        let i = self.instance_index(instance)?;
        let s = self.solver_index(solver)?;
        Some(&self.records[i][s])
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// A knowledge base over the given instance indices only. Normalization
    /// bounds are recomputed from the retained instances.
    pub fn restrict(&self, keep: &[usize]) -> KnowledgeBase {
        let instances: Vec<ProblemInstance> =
            keep.iter().map(|&i| self.instances[i].clone()).collect();
        let records: Vec<Vec<SolverRecord>> =
            keep.iter().map(|&i| self.records[i].clone()).collect();
        let index = instances
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        let ranges = compute_ranges(&instances, self.dims);
        KnowledgeBase {
            instances,
            index,
            portfolio: self.portfolio.clone(),
            records,
            timeout: self.timeout,
            dims: self.dims,
            ranges,
        }
    }

    /// Leave-one-out view: everything except `id`.
    pub fn without(&self, id: &str) -> KnowledgeBase {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.instances[i].id != id)
            .collect();
        self.restrict(&keep)
    }
}

fn compute_ranges(instances: &[ProblemInstance], dims: usize) -> Vec<FeatureRange> {
    (0..dims)
        .map(|j| {
            let (min, max) = instances
                .iter()
                .map(|p| p.features[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            if instances.is_empty() {
                FeatureRange { min: 0.0, max: 0.0 }
            } else {
                FeatureRange { min, max }
            }
        })
        .collect()
}
