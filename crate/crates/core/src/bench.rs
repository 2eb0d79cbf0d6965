//! Cross-validation over a knowledge base with trace replay.
//!
//! Each test instance is solved by the executor on a virtual clock, with the
//! remaining folds as the k-NN training base and its own records as the
//! replayed solver behaviour. Per-instance score and area bounds are taken
//! over every compared run on that instance: the constituent solvers and all
//! simulated portfolio runs.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::executor::{ExecError, Executor, ExecutorConfig, ReplayBackend, SolveResult};
use crate::kb::{KbError, KnowledgeBase, Outcome, ProblemKind};
use crate::metrics::{evaluate, vbs, InstanceBounds, Metric, MetricError, MetricTable, MetricValue, RunView};
use crate::par::{self, ExecMode};
use crate::scheduler::ParallelSchedule;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_CORES: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{instances} instances cannot fill {folds} folds")]
    TooSmall { instances: usize, folds: usize },
    #[error("invalid fold plan: {0}")]
    Plan(String),
    #[error("core counts must be at least 1")]
    Cores,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// Disjoint, exhaustive instance folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub seed: Option<u64>,
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Seeded shuffle, then round-robin assignment.
    pub fn random(n: usize, folds: usize, seed: u64) -> Result<Self, BenchError> {
        if folds < 2 || n < folds {
            return Err(BenchError::TooSmall { instances: n, folds });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut out = vec![Vec::new(); folds];
        for (pos, i) in order.into_iter().enumerate() {
            out[pos % folds].push(i);
        }
        for f in &mut out {
            f.sort_unstable();
        }
        Ok(Self { seed: Some(seed), folds: out })
    }

    /// An explicit plan; must partition `0..n` into non-empty folds.
    pub fn from_folds(n: usize, folds: Vec<Vec<usize>>) -> Result<Self, BenchError> {
        let mut seen = vec![false; n];
        for f in &folds {
            if f.is_empty() {
                return Err(BenchError::Plan("empty fold".into()));
            }
            for &i in f {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(BenchError::Plan(format!("instance {i} out of range or repeated")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(BenchError::Plan(format!("instance {i} in no fold")));
        }
        Ok(Self { seed: None, folds })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Instances outside fold `f`, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        let mut keep: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        keep.sort_unstable();
        keep
    }
}

/// Dataset means: proven in percent, score scaled by 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub proven: f64,
    pub time: f64,
    pub score: Option<f64>,
    pub area: Option<f64>,
}

impl Aggregate {
    pub fn of(values: &[MetricValue]) -> Self {
        let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
        let n = values.len().max(1) as f64;
        Self {
            proven: 100.0 * values.iter().filter(|v| v.proven).count() as f64 / n,
            time: values.iter().map(|v| v.time).sum::<f64>() / n,
            score: mean(values.iter().filter_map(|v| v.score).collect()).map(|s| 100.0 * s),
            area: mean(values.iter().filter_map(|v| v.area).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub name: String,
    pub aggregate: Aggregate,
    pub per_instance: Vec<MetricValue>,
}

/// Instances on which the portfolio strictly beats the virtual best solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VbsWins {
    pub proven: usize,
    pub time: usize,
    pub score: usize,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreReport {
    pub cores: usize,
    /// VPS member solvers per metric, in metric order.
    pub vps_solvers: Vec<(Metric, Vec<String>)>,
    pub strategies: Vec<StrategyReport>,
    pub vbs_wins: VbsWins,
    pub outcomes: Vec<Outcome>,
    pub schedules: Vec<Option<ParallelSchedule>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub seed: Option<u64>,
    pub timeout: f64,
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    pub folds: Vec<Vec<String>>,
    pub results: Vec<CoreReport>,
}

const CSV_HEADER: &str = "cores,strategy,proven (%),time (s),score x 100,area (s)";

impl BenchReport {
    /// One row per strategy and core count.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or_else(String::new, |v| format!("{v:.2}"));
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.results {
            for s in &r.strategies {
                let a = &s.aggregate;
                let _ = writeln!(
                    out,
                    "{},{},{:.2},{:.2},{},{}",
                    r.cores,
                    s.name,
                    a.proven,
                    a.time,
                    opt(a.score),
                    opt(a.area)
                );
            }
        }
        out
    }

    pub fn core(&self, c: usize) -> Option<&CoreReport> {
        self.results.iter().find(|r| r.cores == c)
    }
}

/// Cross-validation with a seeded ten-fold plan.
pub fn cross_validate(
    kb: &KnowledgeBase,
    cores: &[usize],
    cfg: &ExecutorConfig,
    seed: u64,
) -> Result<BenchReport, BenchError> {
    let plan = FoldPlan::random(kb.len(), DEFAULT_FOLDS, seed)?;
    cross_validate_with_plan(kb, &plan, cores, cfg, ExecMode::default())
}

pub fn cross_validate_with_plan(
    kb: &KnowledgeBase,
    plan: &FoldPlan,
    cores: &[usize],
    cfg: &ExecutorConfig,
    mode: ExecMode,
) -> Result<BenchReport, BenchError> {
    if cores.contains(&0) {
        return Err(BenchError::Cores);
    }
    let t = kb.timeout();
    let training: Vec<KnowledgeBase> =
        (0..plan.folds().len()).map(|f| kb.restrict(&plan.training(f))).collect();
    let tasks: Vec<(usize, usize)> = plan
        .folds()
        .iter()
        .enumerate()
        .flat_map(|(f, fold)| fold.iter().map(move |&i| (i, f)))
        .collect();

    let runs = par::map(mode, &tasks, |&(i, f)| -> Result<(usize, Vec<SolveResult>), BenchError> {
        let problem = &kb.instances()[i];
        let results = cores
            .iter()
            .map(|&c| {
                let cfg = ExecutorConfig {
                    cores: c,
                    timeout: t,
                    anytime: false,
                    ..cfg.clone()
                };
                let backend = ReplayBackend::new(kb, i, cfg.simulated_overhead);
                Executor::new(problem, &training[f], &cfg, backend)?.solve().map_err(BenchError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((i, results))
    });
    let mut sunny: Vec<Vec<SolveResult>> = vec![Vec::new(); kb.len()];
    for r in runs {
        let (i, results) = r?;
        sunny[i] = results;
    }

    let n = kb.len();
    let mut solver_values = Vec::with_capacity(n);
    let mut sunny_values: Vec<Vec<MetricValue>> = vec![Vec::with_capacity(n); cores.len()];
    for (i, p) in kb.instances().iter().enumerate() {
        let recs = kb.records(i);
        let views = recs.iter().map(RunView::from).chain(sunny[i].iter().map(SolveResult::run_view));
        let bounds = InstanceBounds::from_runs(p.direction, views, t);
        let eval = |run: RunView<'_>| evaluate(run, p.kind, p.direction, bounds.as_ref(), t);
        solver_values.push(recs.iter().map(|r| eval(r.into())).collect::<Result<Vec<_>, _>>()?);
        for (ci, res) in sunny[i].iter().enumerate() {
            sunny_values[ci].push(eval(res.run_view())?);
        }
    }
    let table = MetricTable {
        solvers: kb.portfolio().to_vec(),
        instances: kb.instances().iter().map(|p| p.id.clone()).collect(),
        values: solver_values,
    };
    let metrics = metric_set(kb);
    let vbs_values = vbs_values(&table, &metrics);
    let solver_reports: Vec<StrategyReport> = (0..table.solvers.len())
        .map(|s| strategy(&table.solvers[s], table.values.iter().map(|row| row[s]).collect()))
        .collect();

    let mut results = Vec::with_capacity(cores.len());
    for (ci, &c) in cores.iter().enumerate() {
        let cc = c.min(table.solvers.len());
        let (vps_solvers, vps_values) = vps_values(&table, &metrics, cc)?;
        let mine = &sunny_values[ci];
        let mut wins = VbsWins::default();
        for (v, best) in mine.iter().zip(&vbs_values) {
            let beats = |m: Metric| matches!((v.get(m), best.get(m)), (Some(a), Some(b)) if m.better(a, b));
            wins.proven += beats(Metric::Proven) as usize;
            wins.time += beats(Metric::Time) as usize;
            wins.score += beats(Metric::Score) as usize;
            wins.area += beats(Metric::Area) as usize;
        }
        let mut strategies = vec![
            strategy(&format!("sunny({c})"), mine.clone()),
            strategy(&format!("vps({cc})"), vps_values),
            strategy("vbs", vbs_values.clone()),
        ];
        strategies.extend(solver_reports.iter().cloned());
        results.push(CoreReport {
            cores: c,
            vps_solvers,
            strategies,
            vbs_wins: wins,
            outcomes: sunny.iter().map(|r| r[ci].outcome).collect(),
            schedules: sunny.iter().map(|r| r[ci].schedule.clone()).collect(),
        });
    }

    let ids = |f: &Vec<usize>| f.iter().map(|&i| kb.instances()[i].id.clone()).collect();
    Ok(BenchReport {
        seed: plan.seed,
        timeout: t,
        solvers: table.solvers.clone(),
        instances: table.instances.clone(),
        folds: plan.folds().iter().map(ids).collect(),
        results,
    })
}

/// Per-solver, VBS and VPS rows computed from the records alone, with bounds
/// over the full portfolio. VPS core counts are capped at the portfolio size.
pub fn baseline_strategies(kb: &KnowledgeBase, cores: &[usize]) -> Result<Vec<StrategyReport>, BenchError> {
    if cores.contains(&0) {
        return Err(BenchError::Cores);
    }
    let table = MetricTable::from_kb(kb)?;
    let metrics = metric_set(kb);
    let mut out: Vec<StrategyReport> = (0..table.solvers.len())
        .map(|s| strategy(&table.solvers[s], table.values.iter().map(|row| row[s]).collect()))
        .collect();
    out.push(strategy("vbs", vbs_values(&table, &metrics)));
    let mut capped: Vec<usize> = cores.iter().map(|&c| c.min(table.solvers.len())).collect();
    capped.dedup();
    for cc in capped {
        out.push(strategy(&format!("vps({cc})"), vps_values(&table, &metrics, cc)?.1));
    }
    Ok(out)
}

/// Score and area only when the base holds optimisation problems.
fn metric_set(kb: &KnowledgeBase) -> Vec<Metric> {
    let has_cop = kb.instances().iter().any(|p| p.kind == ProblemKind::Cop);
    Metric::ALL.into_iter().filter(|m| has_cop || matches!(m, Metric::Proven | Metric::Time)).collect()
}

fn vbs_values(table: &MetricTable, metrics: &[Metric]) -> Vec<MetricValue> {
    table.values.iter().map(|row| combine(metrics, |m| vbs(row, m))).collect()
}

type VpsMembers = Vec<(Metric, Vec<String>)>;

fn vps_values(table: &MetricTable, metrics: &[Metric], c: usize) -> Result<(VpsMembers, Vec<MetricValue>), MetricError> {
    let mut members = Vec::new();
    let mut cols = Vec::new();
    for &m in metrics {
        let v = table.vps(c, m)?;
        members.push((m, v.solvers));
        cols.push(v.per_instance);
    }
    let values = (0..table.values.len())
        .map(|i| {
            let mut col = cols.iter();
            combine(metrics, |_| col.next().and_then(|c| c[i]))
        })
        .collect();
    Ok((members, values))
}

fn strategy(name: &str, per_instance: Vec<MetricValue>) -> StrategyReport {
    StrategyReport {
        name: name.to_string(),
        aggregate: Aggregate::of(&per_instance),
        per_instance,
    }
}

/// A per-instance value whose metrics may come from different solvers.
fn combine(metrics: &[Metric], mut pick: impl FnMut(Metric) -> Option<f64>) -> MetricValue {
    let mut v = MetricValue {
        proven: false,
        time: 0.0,
        score: None,
        area: None,
    };
    for &m in metrics {
        let x = pick(m);
        match m {
            Metric::Proven => v.proven = x == Some(1.0),
            Metric::Time => v.time = x.unwrap_or(0.0),
            Metric::Score => v.score = x,
            Metric::Area => v.area = x,
        }
    }
    v
}

/// Replays `schedule` on knowledge-base instance `instance`, from time 0 and
/// without pre-solving, up to the timeout.
pub fn simulate_run(
    instance: &str,
    schedule: &ParallelSchedule,
    kb: &KnowledgeBase,
    cfg: &ExecutorConfig,
) -> Result<SolveResult, BenchError> {
    let i = kb.instance_index(instance).ok_or_else(|| KbError::UnknownInstance(instance.to_string()))?;
    let cfg = ExecutorConfig {
        timeout: kb.timeout(),
        anytime: false,
        ..cfg.clone()
    };
    let backend = ReplayBackend::new(kb, i, cfg.simulated_overhead);
    Ok(Executor::new(&kb.instances()[i], kb, &cfg, backend)?.run_schedule(schedule)?)
}
