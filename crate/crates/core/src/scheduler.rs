//! SUNNY schedule construction and its parallelisation over `c` cores.
//!
//! A sequential schedule is built from a neighbourhood in three steps:
//! select the smallest sub-portfolio that does as well as the whole
//! portfolio on the neighbourhood, allocate time proportionally to what each
//! selected solver contributes, then order the solvers fastest first.

use std::collections::HashSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, Neighbourhood, ProblemKind};
use crate::metrics::{eval_area, eval_score, InstanceBounds, MetricError, RunView};

/// Tolerance on schedule budgets, in seconds.
pub const BUDGET_TOLERANCE: f64 = 1e-3;

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("empty neighbourhood")]
    EmptyNeighbourhood,
    #[error("budget must be positive, got {0}")]
    Budget(f64),
    #[error("neighbour {0} not in knowledge base")]
    UnknownInstance(String),
    #[error("{id} is a {found:?} instance, expected {expected:?}")]
    Kind {
        id: String,
        expected: ProblemKind,
        found: ProblemKind,
    },
    #[error("schedule slot for {solver} has non-positive time {time}")]
    SlotTime { solver: String, time: f64 },
    #[error("solver {0} scheduled twice")]
    Duplicate(String),
    #[error("schedule sums to {total}, expected {expected}")]
    Sum { total: f64, expected: f64 },
    #[error("need at least one core")]
    NoCores,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One solver with its allotted seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "(String, f64)", from = "(String, f64)")]
pub struct Slot {
    pub solver: String,
    pub time: f64,
}

impl From<Slot> for (String, f64) {
    fn from(s: Slot) -> Self {
        (s.solver, s.time)
    }
}

impl From<(String, f64)> for Slot {
    fn from((solver, time): (String, f64)) -> Self {
        Slot { solver, time }
    }
}

/// A sequential schedule: distinct solvers, each with a positive time slice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    slots: Vec<Slot>,
}

impl Schedule {
    pub fn new(slots: Vec<Slot>) -> Result<Self, ScheduleError> {
        let mut seen = HashSet::new();
        for s in &slots {
            if !(s.time > 0.0 && s.time.is_finite()) {
                return Err(ScheduleError::SlotTime {
                    solver: s.solver.clone(),
                    time: s.time,
                });
            }
            if !seen.insert(s.solver.as_str()) {
                return Err(ScheduleError::Duplicate(s.solver.clone()));
            }
        }
        Ok(Self { slots })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a schedule from `(solver, seconds)` pairs.
    pub fn from_pairs<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, ScheduleError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(s, t)| Slot {
                    solver: s.into(),
                    time: t,
                })
                .collect(),
        )
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.slots.iter().map(|s| s.time).sum()
    }

    pub fn solvers(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.solver.as_str())
    }
}

/// Per-core sequential schedules; `cores[0]` is core 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelSchedule {
    pub cores: Vec<Schedule>,
}

impl ParallelSchedule {
    pub fn core(&self, i: usize) -> &Schedule {
        &self.cores[i - 1]
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn single(schedule: Schedule) -> Self {
        Self {
            cores: vec![schedule],
        }
    }
}

/// SUNNY for whichever kind the neighbourhood holds.
pub fn sunny_schedule(
    nbh: &Neighbourhood,
    kb: &KnowledgeBase,
    budget: f64,
) -> Result<Schedule, ScheduleError> {
    let first = nbh.ids().next().ok_or(ScheduleError::EmptyNeighbourhood)?;
    let kind = kb
        .instance(first)
        .ok_or_else(|| ScheduleError::UnknownInstance(first.to_string()))?
        .kind;
    match kind {
        ProblemKind::Csp => sunny_schedule_csp(nbh, kb, budget),
        ProblemKind::Cop => sunny_schedule_cop(nbh, kb, budget),
    }
}

fn neighbour_rows(
    nbh: &Neighbourhood,
    kb: &KnowledgeBase,
    budget: f64,
    kind: ProblemKind,
) -> Result<Vec<usize>, ScheduleError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(ScheduleError::Budget(budget));
    }
    if nbh.is_empty() {
        return Err(ScheduleError::EmptyNeighbourhood);
    }
    nbh.ids()
        .map(|id| {
            let i = kb
                .instance_index(id)
                .ok_or_else(|| ScheduleError::UnknownInstance(id.to_string()))?;
            let found = kb.instances()[i].kind;
            if found != kind {
                return Err(ScheduleError::Kind {
                    id: id.to_string(),
                    expected: kind,
                    found,
                });
            }
            Ok(i)
        })
        .collect()
}

/// Exhaustive sub-portfolio search by ascending cardinality. Returns the
/// first cardinality at which some subset reaches `target` on `coverage`,
/// choosing the subset with the smallest `cost`, then the smallest sorted
/// solver-id tuple.
fn select_subportfolio(
    portfolio: &[String],
    target: f64,
    coverage: impl Fn(&[usize]) -> f64,
    cost: impl Fn(&[usize]) -> f64,
) -> Vec<usize> {
    let n = portfolio.len();
    for size in 0..=n {
        let mut best: Option<(f64, Vec<&str>, Vec<usize>)> = None;
        for subset in (0..n).combinations(size) {
            if coverage(&subset) < target - EPS {
                continue;
            }
            let c = cost(&subset);
            let mut ids: Vec<&str> = subset.iter().map(|&s| portfolio[s].as_str()).collect();
            ids.sort_unstable();
            let better = match &best {
                None => true,
                Some((bc, bids, _)) => c < bc - EPS || ((c - bc).abs() <= EPS && ids < *bids),
            };
            if better {
                best = Some((c, ids, subset));
            }
        }
        if let Some((_, _, subset)) = best {
            return subset;
        }
    }
    (0..n).collect()
}

/// Allocates `budget` proportionally to `weights`, drops zero weights, and
/// orders by ascending `order_key` then solver id.
fn allocate(
    portfolio: &[String],
    weights: &[(usize, f64)],
    order_key: impl Fn(usize) -> f64,
    budget: f64,
) -> Result<Schedule, ScheduleError> {
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let mut chosen: Vec<(usize, f64)> = weights.iter().copied().filter(|w| w.1 > 0.0).collect();
    chosen.sort_by(|a, b| {
        order_key(a.0)
            .total_cmp(&order_key(b.0))
            .then_with(|| portfolio[a.0].cmp(&portfolio[b.0]))
    });
    Schedule::new(
        chosen
            .into_iter()
            .map(|(s, w)| Slot {
                solver: portfolio[s].clone(),
                time: budget * w / total,
            })
            .collect(),
    )
}

pub fn sunny_schedule_csp(
    nbh: &Neighbourhood,
    kb: &KnowledgeBase,
    budget: f64,
) -> Result<Schedule, ScheduleError> {
    let rows = neighbour_rows(nbh, kb, budget, ProblemKind::Csp)?;
    let t_max = kb.timeout();
    let portfolio = kb.portfolio();
    let n = portfolio.len();
    // solved[s][j], time[s][j] over neighbourhood instance j
    let solved: Vec<Vec<bool>> = (0..n)
        .map(|s| rows.iter().map(|&i| kb.record(i, s).solves(ProblemKind::Csp, t_max)).collect())
        .collect();
    let time: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            rows.iter()
                .map(|&i| kb.record(i, s).solving_time(ProblemKind::Csp, t_max))
                .collect()
        })
        .collect();
    let m = rows.len();
    let covered = |subset: &[usize]| (0..m).filter(|&j| subset.iter().any(|&s| solved[s][j])).count();
    let all: Vec<usize> = (0..n).collect();
    let target = covered(&all);

    let selected = select_subportfolio(
        portfolio,
        target as f64,
        |sub| covered(sub) as f64,
        |sub| {
            (0..m)
                .map(|j| sub.iter().map(|&s| time[s][j]).fold(t_max, f64::min))
                .sum()
        },
    );

    let solved_count = |s: usize| solved[s].iter().filter(|&&x| x).count();
    let total_time = |s: usize| time[s].iter().sum::<f64>();
    let mut weights: Vec<(usize, f64)> = selected.iter().map(|&s| (s, solved_count(s) as f64)).collect();
    let unsolved = m - target;
    if unsolved > 0 {
        // backup solver: most neighbours solved, then fastest, then id
        let backup = (0..n)
            .min_by(|&a, &b| {
                solved_count(b)
                    .cmp(&solved_count(a))
                    .then_with(|| total_time(a).total_cmp(&total_time(b)))
                    .then_with(|| portfolio[a].cmp(&portfolio[b]))
            })
            .expect("non-empty portfolio");
        match weights.iter_mut().find(|w| w.0 == backup) {
            Some(w) => w.1 += unsolved as f64,
            None => weights.push((backup, unsolved as f64)),
        }
    }
    allocate(portfolio, &weights, total_time, budget)
}

pub fn sunny_schedule_cop(
    nbh: &Neighbourhood,
    kb: &KnowledgeBase,
    budget: f64,
) -> Result<Schedule, ScheduleError> {
    let rows = neighbour_rows(nbh, kb, budget, ProblemKind::Cop)?;
    let t_max = kb.timeout();
    let portfolio = kb.portfolio();
    let n = portfolio.len();
    let m = rows.len();
    let mut score = vec![vec![0.0; m]; n];
    let mut area = vec![vec![0.0; m]; n];
    for (j, &i) in rows.iter().enumerate() {
        let dir = kb.instances()[i].direction;
        let recs = kb.records(i);
        let bounds = InstanceBounds::from_runs(dir, recs.iter().map(RunView::from), t_max);
        for s in 0..n {
            let run = RunView::from(&recs[s]);
            score[s][j] = eval_score(run, bounds.as_ref(), dir, t_max)?;
            area[s][j] = eval_area(run, bounds.as_ref(), dir, t_max)?;
        }
    }
    let best_score = |sub: &[usize]| -> f64 {
        (0..m)
            .map(|j| sub.iter().map(|&s| score[s][j]).fold(0.0, f64::max))
            .sum()
    };
    let all: Vec<usize> = (0..n).collect();
    let target = best_score(&all);
    let selected = select_subportfolio(portfolio, target, best_score, |sub| {
        (0..m)
            .map(|j| sub.iter().map(|&s| area[s][j]).fold(t_max, f64::min))
            .sum()
    });

    let total_score = |s: usize| score[s].iter().sum::<f64>();
    let total_area = |s: usize| area[s].iter().sum::<f64>();
    let mut weights: Vec<(usize, f64)> = selected.iter().map(|&s| (s, total_score(s))).collect();
    if weights.iter().all(|w| w.1 <= 0.0) {
        // nothing found anywhere in the neighbourhood: one backup solver
        let backup = (0..n)
            .min_by(|&a, &b| {
                total_score(b)
                    .total_cmp(&total_score(a))
                    .then_with(|| total_area(a).total_cmp(&total_area(b)))
                    .then_with(|| portfolio[a].cmp(&portfolio[b]))
            })
            .expect("non-empty portfolio");
        weights = vec![(backup, 1.0)];
    }
    allocate(portfolio, &weights, |s| total_area(s) / m as f64, budget)
}

/// Distributes `sigma` over `c` cores. Solvers are ranked by descending time
/// (ties by position in `sigma`); ranks `1..c` get a dedicated core for the
/// whole `budget`, the rest share core `c` in their original order with
/// times stretched to fill `budget`.
pub fn parallelise(sigma: &Schedule, c: usize, budget: f64) -> Result<ParallelSchedule, ScheduleError> {
    if c == 0 {
        return Err(ScheduleError::NoCores);
    }
    let total = sigma.total();
    if !sigma.is_empty() && (total - budget).abs() > BUDGET_TOLERANCE {
        return Err(ScheduleError::Sum {
            total,
            expected: budget,
        });
    }
    let slots = sigma.slots();
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by(|&a, &b| slots[b].time.total_cmp(&slots[a].time).then(a.cmp(&b)));
    let mut rank = vec![0; slots.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let mut cores = vec![Schedule::empty(); c];
    for (i, slot) in slots.iter().enumerate() {
        if rank[i] < c {
            cores[rank[i] - 1] = Schedule {
                slots: vec![Slot {
                    solver: slot.solver.clone(),
                    time: budget,
                }],
            };
        }
    }
    let tail: Vec<&Slot> = slots.iter().enumerate().filter(|(i, _)| rank[*i] >= c).map(|(_, s)| s).collect();
    let tail_total: f64 = tail.iter().map(|s| s.time).sum();
    if !tail.is_empty() {
        cores[c - 1] = Schedule {
            slots: tail
                .iter()
                .map(|s| Slot {
                    solver: s.solver.clone(),
                    time: budget / tail_total * s.time,
                })
                .collect(),
        };
    }
    Ok(ParallelSchedule { cores })
}
