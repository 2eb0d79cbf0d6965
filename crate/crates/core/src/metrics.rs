//! Evaluation metrics (proven, time, score, area) and the oracle baselines
//! built on them: the virtual best solver and the virtual c-parallel solver.
//!
//! Score and area share one quality scale. A solution with value `v` earns
//! `0.75 - 0.5 * |v - best| / |worst - best|`, where best and worst are the
//! extreme values any compared run reached on the instance (0.75 when they
//! coincide). A completed search earns 1, no answer earns 0. Area integrates
//! `1 - quality(t)` over `[0, T]`, so it is `T` exactly when the score is 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{check_trace, Direction, KnowledgeBase, Outcome, ProblemKind, SolverRecord, TracePoint};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("objective value {value} outside known bounds [{lo}, {hi}]")]
    OutOfBounds { value: f64, lo: f64, hi: f64 },
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("metric {0:?} is undefined for this data (no COP instances)")]
    Undefined(Metric),
    #[error("c = {c} outside 1..={portfolio}")]
    Cores { c: usize, portfolio: usize },
    #[error("empty solver set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Proven,
    Time,
    Score,
    Area,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Proven, Metric::Time, Metric::Score, Metric::Area];

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Proven | Metric::Score)
    }

    /// Strict improvement of `a` over `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    fn pick(self, a: f64, b: f64) -> f64 {
        if self.better(b, a) {
            b
        } else {
            a
        }
    }
}

/// All four metrics of one run on one instance. Score and area are only
/// defined for COPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub proven: bool,
    pub time: f64,
    pub score: Option<f64>,
    pub area: Option<f64>,
}

impl MetricValue {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Proven => Some(if self.proven { 1.0 } else { 0.0 }),
            Metric::Time => Some(self.time),
            Metric::Score => self.score,
            Metric::Area => self.area,
        }
    }
}

/// Borrowed view of anything that ran on an instance: a KB record or an
/// executor result.
#[derive(Debug, Clone, Copy)]
pub struct RunView<'a> {
    pub outcome: Outcome,
    pub time: f64,
    pub trace: &'a [TracePoint],
}

impl<'a> From<&'a SolverRecord> for RunView<'a> {
    fn from(r: &'a SolverRecord) -> Self {
        RunView {
            outcome: r.outcome,
            time: r.time,
            trace: &r.trace,
        }
    }
}

impl RunView<'_> {
    fn proof_time(&self, timeout: f64) -> Option<f64> {
        (self.outcome.is_complete() && self.time < timeout).then_some(self.time)
    }
}

/// Extreme objective values reached on one instance by the compared runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceBounds {
    pub best_known: f64,
    pub worst_known: f64,
    pub optimum_proven: bool,
}

impl InstanceBounds {
    /// Bounds over every solution found before `timeout`; `None` when no run
    /// found any.
    pub fn from_runs<'a>(
        direction: Direction,
        runs: impl IntoIterator<Item = RunView<'a>>,
        timeout: f64,
    ) -> Option<Self> {
        let mut best: Option<f64> = None;
        let mut worst: Option<f64> = None;
        let mut proven = false;
        for run in runs {
            proven |= run.outcome == Outcome::Opt && run.time < timeout;
            for p in run.trace.iter().filter(|p| p.t < timeout) {
                best = Some(best.map_or(p.v, |b| direction.best(b, p.v)));
                worst = Some(worst.map_or(p.v, |w| if direction.better(w, p.v) { p.v } else { w }));
            }
        }
        Some(InstanceBounds {
            best_known: best?,
            worst_known: worst?,
            optimum_proven: proven,
        })
    }

    /// Solution quality in [0.25, 0.75].
    pub fn quality(&self, v: f64) -> Result<f64, MetricError> {
        let (lo, hi) = if self.best_known <= self.worst_known {
            (self.best_known, self.worst_known)
        } else {
            (self.worst_known, self.best_known)
        };
        let slack = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if v < lo - slack || v > hi + slack {
            return Err(MetricError::OutOfBounds { value: v, lo, hi });
        }
        let span = (self.worst_known - self.best_known).abs();
        if span == 0.0 {
            return Ok(0.75);
        }
        let q = 0.75 - 0.5 * (v - self.best_known).abs() / span;
        Ok(q.clamp(0.25, 0.75))
    }
}

/// `(proven, time)`: proven iff the run settles the instance before `T`.
pub fn eval_proven_time(run: RunView<'_>, kind: ProblemKind, timeout: f64) -> (bool, f64) {
    if run.outcome.solves(kind) && run.time < timeout {
        (true, run.time)
    } else {
        (false, timeout)
    }
}

pub fn eval_score(
    run: RunView<'_>,
    bounds: Option<&InstanceBounds>,
    direction: Direction,
    timeout: f64,
) -> Result<f64, MetricError> {
    check_trace(run.trace, direction).map_err(MetricError::Trace)?;
    if run.proof_time(timeout).is_some() {
        return Ok(1.0);
    }
    match run.trace.iter().rev().find(|p| p.t < timeout) {
        None => Ok(0.0),
        Some(p) => match bounds {
            Some(b) => b.quality(p.v),
            None => Err(MetricError::OutOfBounds {
                value: p.v,
                lo: f64::NAN,
                hi: f64::NAN,
            }),
        },
    }
}

pub fn eval_area(
    run: RunView<'_>,
    bounds: Option<&InstanceBounds>,
    direction: Direction,
    timeout: f64,
) -> Result<f64, MetricError> {
    check_trace(run.trace, direction).map_err(MetricError::Trace)?;
    let end = run.proof_time(timeout).unwrap_or(timeout);
    let mut area = 0.0;
    let mut t = 0.0;
    let mut quality = 0.0;
    for p in run.trace.iter().take_while(|p| p.t < end) {
        let b = bounds.ok_or(MetricError::OutOfBounds {
            value: p.v,
            lo: f64::NAN,
            hi: f64::NAN,
        })?;
        area += (p.t - t) * (1.0 - quality);
        t = p.t;
        quality = b.quality(p.v)?;
    }
    area += (end - t) * (1.0 - quality);
    Ok(area)
}

/// All applicable metrics for one run.
pub fn evaluate(
    run: RunView<'_>,
    kind: ProblemKind,
    direction: Direction,
    bounds: Option<&InstanceBounds>,
    timeout: f64,
) -> Result<MetricValue, MetricError> {
    let (proven, time) = eval_proven_time(run, kind, timeout);
    let (score, area) = match kind {
        ProblemKind::Csp => (None, None),
        ProblemKind::Cop => (
            Some(eval_score(run, bounds, direction, timeout)?),
            Some(eval_area(run, bounds, direction, timeout)?),
        ),
    };
    Ok(MetricValue {
        proven,
        time,
        score,
        area,
    })
}

/// Virtual best solver: the best value of `metric` over the given runs of
/// one instance. `None` when the metric is undefined for every run.
pub fn vbs(values: &[MetricValue], metric: Metric) -> Option<f64> {
    values
        .iter()
        .filter_map(|v| v.get(metric))
        .reduce(|a, b| metric.pick(a, b))
}

/// Per-(instance, solver) metrics for a whole knowledge base, with bounds
/// taken over the full portfolio on each instance.
#[derive(Debug, Clone, Serialize)]
pub struct MetricTable {
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    /// `values[instance][solver]`
    pub values: Vec<Vec<MetricValue>>,
}

impl MetricTable {
    pub fn from_kb(kb: &KnowledgeBase) -> Result<Self, MetricError> {
        let t = kb.timeout();
        let mut values = Vec::with_capacity(kb.len());
        for (i, p) in kb.instances().iter().enumerate() {
            let recs = kb.records(i);
            let bounds = InstanceBounds::from_runs(p.direction, recs.iter().map(RunView::from), t);
            let row = recs
                .iter()
                .map(|r| evaluate(r.into(), p.kind, p.direction, bounds.as_ref(), t))
                .collect::<Result<Vec<_>, _>>()?;
            values.push(row);
        }
        Ok(Self {
            solvers: kb.portfolio().to_vec(),
            instances: kb.instances().iter().map(|p| p.id.clone()).collect(),
            values,
        })
    }

    /// Dataset average of `metric` for solver `s`, over the instances where
    /// the metric is defined.
    pub fn average(&self, s: usize, metric: Metric) -> Option<f64> {
        let xs: Vec<f64> = self.values.iter().filter_map(|row| row[s].get(metric)).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn vbs(&self, metric: Metric) -> Vec<Option<f64>> {
        self.values.iter().map(|row| vbs(row, metric)).collect()
    }

    /// The virtual c-parallel solver for `metric`.
    pub fn vps(&self, c: usize, metric: Metric) -> Result<Vps, MetricError> {
        let n = self.solvers.len();
        if c == 0 || c > n {
            return Err(MetricError::Cores { c, portfolio: n });
        }
        let mut ranked: Vec<(usize, f64)> = (0..n)
            .map(|s| self.average(s, metric).map(|a| (s, a)))
            .collect::<Option<_>>()
            .ok_or(MetricError::Undefined(metric))?;
        ranked.sort_by(|a, b| {
            let by_avg = if metric.higher_is_better() {
                b.1.total_cmp(&a.1)
            } else {
                a.1.total_cmp(&b.1)
            };
            by_avg.then_with(|| self.solvers[a.0].cmp(&self.solvers[b.0]))
        });
        let chosen: Vec<usize> = ranked.iter().take(c).map(|r| r.0).collect();
        let per_instance = self
            .values
            .iter()
            .map(|row| {
                let picked: Vec<MetricValue> = chosen.iter().map(|&s| row[s]).collect();
                vbs(&picked, metric)
            })
            .collect();
        Ok(Vps {
            solvers: chosen.iter().map(|&s| self.solvers[s].clone()).collect(),
            per_instance,
        })
    }
}

/// A fixed selection of solvers and its idealized per-instance value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vps {
    pub solvers: Vec<String>,
    pub per_instance: Vec<Option<f64>>,
}

/// Convenience wrapper over [`MetricTable::vps`].
pub fn vps(kb: &KnowledgeBase, c: usize, metric: Metric) -> Result<Vps, MetricError> {
    MetricTable::from_kb(kb)?.vps(c, metric)
}
