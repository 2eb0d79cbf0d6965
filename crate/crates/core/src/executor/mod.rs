//! Two-phase portfolio execution.
//!
//! Pre-solving runs an optional static schedule first-come first-served on
//! the available cores while the instance neighbourhood is computed on the
//! first free core. Solving then builds a SUNNY schedule for the remaining
//! time, parallelises it, and runs each core's sequence. Solvers exchange
//! objective bounds through the control loop only: a solver that has been
//! quiet for the restart threshold while holding an obsolete bound is
//! relaunched with the global best.
//!
//! The control loop is backend-agnostic: [`ReplayBackend`] drives a virtual
//! clock from knowledge-base records, [`ProcessBackend`] runs real solver
//! processes against the wall clock.

mod policy;
mod process;
mod protocol;
mod registry;
mod replay;

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{
    neighbours_of_kind, Direction, KbError, KnowledgeBase, Neighbourhood, Outcome, ProblemInstance,
    ProblemKind, TracePoint, DEFAULT_K,
};
use crate::metrics::RunView;
use crate::scheduler::{parallelise, sunny_schedule, ParallelSchedule, Schedule, ScheduleError, Slot};

pub use policy::{apply_restart_policy, apply_waiting_policy};
pub use process::{ProcessBackend, PROCESS_TICK};
pub use protocol::{OutputParser, ParsedEvent, DEFAULT_OBJECTIVE_PATTERN};
pub use registry::{
    AdapterBackend, Capabilities, Registry, RegistryError, SolverAdapter, SolverSpec,
};
pub use replay::ReplayBackend;

pub const DEFAULT_TIMEOUT: f64 = 1800.0;
pub const DEFAULT_WAIT_TIME: f64 = 2.0;
pub const DEFAULT_RESTART_TIME: f64 = 5.0;
/// Virtual cost charged for neighbourhood detection under trace replay.
pub const DEFAULT_SIMULATED_OVERHEAD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown solver {0}")]
    UnknownSolver(String),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub wait_time: Option<f64>,
    pub restart_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub cores: usize,
    pub timeout: f64,
    pub wait_time: f64,
    pub restart_time: f64,
    pub static_schedule: Schedule,
    pub anytime: bool,
    pub memory_limit_mb: Option<u64>,
    pub ignore_search_annotations: bool,
    pub k: usize,
    pub overrides: BTreeMap<String, SolverOverrides>,
    pub simulated_overhead: f64,
}

pub fn detected_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            cores: detected_cores(),
            timeout: DEFAULT_TIMEOUT,
            wait_time: DEFAULT_WAIT_TIME,
            restart_time: DEFAULT_RESTART_TIME,
            static_schedule: Schedule::empty(),
            anytime: true,
            memory_limit_mb: None,
            ignore_search_annotations: false,
            k: DEFAULT_K,
            overrides: BTreeMap::new(),
            simulated_overhead: DEFAULT_SIMULATED_OVERHEAD,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        let bad = |m: String| Err(ExecError::Config(m));
        if self.cores < 1 {
            return bad("cores must be at least 1".into());
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return bad(format!("timeout must be positive, got {}", self.timeout));
        }
        if !(self.wait_time >= 0.0) || !(self.restart_time >= 0.0) {
            return bad("wait and restart thresholds must be non-negative".into());
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.simulated_overhead >= 0.0) {
            return bad("simulated overhead must be non-negative".into());
        }
        for (s, o) in &self.overrides {
            if o.wait_time.is_some_and(|x| !(x >= 0.0)) || o.restart_time.is_some_and(|x| !(x >= 0.0)) {
                return bad(format!("negative threshold override for {s}"));
            }
        }
        Ok(())
    }

    pub fn wait_time_for(&self, solver: &str) -> f64 {
        self.overrides.get(solver).and_then(|o| o.wait_time).unwrap_or(self.wait_time)
    }

    pub fn restart_time_for(&self, solver: &str) -> f64 {
        self.overrides.get(solver).and_then(|o| o.restart_time).unwrap_or(self.restart_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Running,
    Suspended,
    Finished,
    Failed,
    Discarded,
}

/// Control-loop bookkeeping for one portfolio solver. Times are on the
/// executor clock; `elapsed` is the solver time consumed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub solver: String,
    pub status: RunStatus,
    pub allotted: f64,
    pub elapsed: f64,
    pub last_solution_at: Option<f64>,
    pub best_bound: Option<f64>,
    pub restarts: u32,
    /// Last launch, resume or restart: the no-solution clock starts here.
    pub clock_origin: f64,
    /// Bound injected at the latest (re)launch.
    pub injected: Option<f64>,
}

impl RunState {
    fn new(solver: &str) -> Self {
        Self {
            solver: solver.to_string(),
            status: RunStatus::Pending,
            allotted: 0.0,
            elapsed: 0.0,
            last_solution_at: None,
            best_bound: None,
            restarts: 0,
            clock_origin: 0.0,
            injected: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Launched { solver: String, core: usize, bound: Option<f64> },
    Resumed { solver: String, core: usize },
    Suspended { solver: String },
    Overrun { solver: String },
    Restarted { solver: String, bound: f64 },
    Solution { solver: String, value: Option<f64> },
    BoundViolation { solver: String, value: f64, bound: f64 },
    Finished { solver: String, outcome: Outcome },
    Failed { solver: String, reason: String },
    Discarded { solver: String },
    Killed { solver: String },
    PauseUnsupported { solver: String },
    RestartUnsupported { solver: String },
    NeighbourhoodStarted,
    NeighbourhoodComputed { size: usize },
    ScheduleComputed { budget: f64 },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub outcome: Outcome,
    pub best_bound: Option<f64>,
    pub winner: Option<String>,
    pub wall_time: f64,
    /// Improvements of the global best bound over time.
    pub trace: Vec<TracePoint>,
    pub presolve_time: Option<f64>,
    pub schedule: Option<ParallelSchedule>,
    pub events: Vec<LogEntry>,
}

impl SolveResult {
    pub fn run_view(&self) -> RunView<'_> {
        RunView {
            outcome: self.outcome,
            time: self.wall_time,
            trace: &self.trace,
        }
    }
}

/// Result of pre-solving.
#[derive(Debug, Clone)]
pub enum Presolved {
    Solved(SolveResult),
    Pending {
        neighbourhood: Option<Neighbourhood>,
        elapsed: f64,
        states: Vec<RunState>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendEventKind {
    Solution(Option<f64>),
    Finished(Outcome),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendEvent {
    pub solver: usize,
    pub kind: BackendEventKind,
}

/// Where solvers actually run. Solver indices follow the portfolio order.
pub trait Backend {
    fn now(&self) -> f64;
    fn capabilities(&self, solver: usize) -> Capabilities;
    /// Fresh start, optionally with an objective bound to beat.
    fn launch(&mut self, solver: usize, bound: Option<f64>) -> Result<(), String>;
    fn suspend(&mut self, solver: usize);
    fn resume(&mut self, solver: usize);
    fn kill(&mut self, solver: usize);
    /// Blocks until the next solver event or until `until`, whichever comes
    /// first, and returns the events of that instant. With no deadline and
    /// nothing left that could report, returns an empty batch.
    fn wait(&mut self, until: Option<f64>) -> Vec<BackendEvent>;
    /// Time to charge for neighbourhood detection that took `measured` seconds.
    fn neighbourhood_cost(&self, measured: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Presolve,
    Solving,
}

#[derive(Debug)]
enum NeighbourhoodTask {
    NotNeeded,
    Waiting,
    Running { ready_at: f64, result: Neighbourhood },
    Done(Neighbourhood),
}

#[derive(Debug, Default, Clone)]
struct Core {
    active: Option<usize>,
    slot_end: Option<f64>,
    overrun_logged: bool,
    queue: VecDeque<(usize, f64)>,
    had_work: bool,
}

/// The portfolio control loop for one problem instance.
pub struct Executor<'a, B: Backend> {
    problem: &'a ProblemInstance,
    kb: &'a KnowledgeBase,
    cfg: &'a ExecutorConfig,
    backend: B,
    kind: ProblemKind,
    direction: Direction,
    states: Vec<RunState>,
    running_since: Vec<Option<f64>>,
    needs_relaunch: Vec<bool>,
    warned: Vec<bool>,
    cores: Vec<Core>,
    fcfs: VecDeque<(usize, f64)>,
    nbh: NeighbourhoodTask,
    global: Option<(f64, usize)>,
    trace: Vec<TracePoint>,
    log: Vec<LogEntry>,
    answer: Option<(Outcome, usize)>,
    timed_out: bool,
    phase: Phase,
    schedule: Option<ParallelSchedule>,
    presolve_time: Option<f64>,
}

impl<'a, B: Backend> Executor<'a, B> {
    /// `kb` is the training base used for k-NN and scheduling; its portfolio
    /// order defines the backend's solver indices.
    pub fn new(
        problem: &'a ProblemInstance,
        kb: &'a KnowledgeBase,
        cfg: &'a ExecutorConfig,
        backend: B,
    ) -> Result<Self, ExecError> {
        cfg.validate()?;
        let n = kb.portfolio().len();
        if n == 0 {
            return Err(ExecError::Config("empty portfolio".into()));
        }
        Ok(Self {
            problem,
            kb,
            cfg,
            backend,
            kind: problem.kind,
            direction: problem.direction,
            states: kb.portfolio().iter().map(|s| RunState::new(s)).collect(),
            running_since: vec![None; n],
            needs_relaunch: vec![false; n],
            warned: vec![false; n],
            cores: vec![Core::default(); cfg.cores],
            fcfs: VecDeque::new(),
            nbh: NeighbourhoodTask::NotNeeded,
            global: None,
            trace: Vec::new(),
            log: Vec::new(),
            answer: None,
            timed_out: false,
            phase: Phase::Presolve,
            schedule: None,
            presolve_time: None,
        })
    }

    pub fn states(&self) -> &[RunState] {
        &self.states
    }

    fn shortcut(&self) -> bool {
        self.cfg.cores >= self.kb.portfolio().len()
    }

    fn solver_index(&self, id: &str) -> Result<usize, ExecError> {
        self.kb.solver_index(id).ok_or_else(|| ExecError::UnknownSolver(id.to_string()))
    }

    fn resolve(&self, schedule: &Schedule) -> Result<VecDeque<(usize, f64)>, ExecError> {
        schedule
            .slots()
            .iter()
            .map(|s| Ok((self.solver_index(&s.solver)?, s.time)))
            .collect()
    }

    fn emit(&mut self, event: Event) {
        let t = self.backend.now();
        debug!("t={t:.3} {event:?}");
        self.log.push(LogEntry { t, event });
    }

    fn name(&self, s: usize) -> String {
        self.kb.portfolio()[s].clone()
    }

    /// Runs the static schedule and neighbourhood detection.
    pub fn presolve(&mut self) -> Result<Presolved, ExecError> {
        self.phase = Phase::Presolve;
        self.fcfs = self.resolve(&self.cfg.static_schedule)?;
        self.nbh = if self.shortcut() {
            NeighbourhoodTask::NotNeeded
        } else {
            NeighbourhoodTask::Waiting
        };
        self.drive()?;
        if self.answer.is_some() || self.timed_out {
            return Ok(Presolved::Solved(self.finish()));
        }
        let elapsed = self.backend.now();
        self.presolve_time = Some(elapsed);
        let neighbourhood = match std::mem::replace(&mut self.nbh, NeighbourhoodTask::NotNeeded) {
            NeighbourhoodTask::Done(n) => Some(n),
            _ => None,
        };
        Ok(Presolved::Pending {
            neighbourhood,
            elapsed,
            states: self.states.clone(),
        })
    }

    /// Pre-solving followed by the dynamic parallel schedule.
    pub fn solve(mut self) -> Result<SolveResult, ExecError> {
        let neighbourhood = match self.presolve()? {
            Presolved::Solved(r) => return Ok(r),
            Presolved::Pending { neighbourhood, .. } => neighbourhood,
        };
        let now = self.backend.now();
        let budget = self.cfg.timeout - now;
        let schedule = match neighbourhood {
            Some(nbh) if budget > 0.0 => {
                let sigma = sunny_schedule(&nbh, self.kb, budget)?;
                parallelise(&sigma, self.cfg.cores, budget)?
            }
            // no prediction: one solver per core for as long as it takes
            _ => self.one_per_core(budget.max(self.cfg.timeout)),
        };
        self.emit(Event::ScheduleComputed { budget });
        self.run_dynamic(schedule)?;
        Ok(self.finish())
    }

    /// Replays a given parallel schedule from the current time, skipping
    /// pre-solving.
    pub fn run_schedule(mut self, schedule: &ParallelSchedule) -> Result<SolveResult, ExecError> {
        self.cores = vec![Core::default(); schedule.num_cores()];
        self.run_dynamic(schedule.clone())?;
        Ok(self.finish())
    }

    fn one_per_core(&self, budget: f64) -> ParallelSchedule {
        let mut cores = vec![Schedule::empty(); self.cfg.cores];
        let usable = self
            .states
            .iter()
            .filter(|st| st.status != RunStatus::Discarded)
            .map(|st| st.solver.clone());
        for (core, solver) in cores.iter_mut().zip(usable) {
            *core = Schedule::new(vec![Slot { solver, time: budget }]).expect("single slot");
        }
        ParallelSchedule { cores }
    }

    fn run_dynamic(&mut self, schedule: ParallelSchedule) -> Result<(), ExecError> {
        self.phase = Phase::Solving;
        for (core, sched) in self.cores.iter_mut().zip(&schedule.cores) {
            core.queue = sched
                .slots()
                .iter()
                .map(|s| {
                    self.kb
                        .solver_index(&s.solver)
                        .map(|i| (i, s.time))
                        .ok_or_else(|| ExecError::UnknownSolver(s.solver.clone()))
                })
                .collect::<Result<_, _>>()?;
            core.had_work = !core.queue.is_empty();
        }
        self.schedule = Some(schedule);
        self.drive()
    }

    fn running(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.states.len()).filter(|&s| self.states[s].status == RunStatus::Running)
    }

    fn running_count(&self) -> usize {
        self.running().count()
    }

    fn presolve_complete(&self) -> bool {
        self.fcfs.is_empty()
            && self.cores.iter().all(|c| c.active.is_none())
            && matches!(self.nbh, NeighbourhoodTask::Done(_) | NeighbourhoodTask::NotNeeded)
    }

    fn drive(&mut self) -> Result<(), ExecError> {
        loop {
            self.dispatch()?;
            if self.answer.is_some() || self.timed_out {
                return Ok(());
            }
            if self.phase == Phase::Presolve && self.presolve_complete() {
                return Ok(());
            }
            let deadline = self.deadline();
            if deadline.is_none() && self.running_count() == 0 {
                return Ok(());
            }
            let events = self.backend.wait(deadline);
            let idle = events.is_empty() && deadline.is_none();
            for ev in events {
                self.on_event(ev);
                if self.answer.is_some() {
                    return Ok(());
                }
            }
            self.on_timers()?;
            if idle {
                return Ok(());
            }
        }
    }

    fn expiry_time(&self, s: usize, end: f64) -> f64 {
        match self.states[s].last_solution_at {
            Some(l) => end.max(l + self.cfg.wait_time_for(&self.states[s].solver)),
            None => end,
        }
    }

    fn restart_due(&self, s: usize) -> Option<f64> {
        // without bound injection the check only fires once, to log it
        if self.kind != ProblemKind::Cop
            || (!self.backend.capabilities(s).supports_bound_injection && self.warned[s])
        {
            return None;
        }
        let (global, _) = self.global?;
        let st = &self.states[s];
        let obsolete = st.best_bound.is_none_or(|own| self.direction.better(global, own));
        obsolete.then(|| policy::quiet_since(st) + self.cfg.restart_time_for(&st.solver))
    }

    fn deadline(&self) -> Option<f64> {
        let mut d: Option<f64> = None;
        let mut push = |x: f64| d = Some(d.map_or(x, |y: f64| y.min(x)));
        if !self.cfg.anytime {
            push(self.cfg.timeout);
        }
        for core in &self.cores {
            if let (Some(s), Some(end)) = (core.active, core.slot_end) {
                push(self.expiry_time(s, end));
            }
        }
        for s in self.running() {
            if let Some(t) = self.restart_due(s) {
                push(t);
            }
        }
        if let NeighbourhoodTask::Running { ready_at, .. } = self.nbh {
            push(ready_at);
        }
        d
    }

    fn stop_clock(&mut self, s: usize) {
        if let Some(since) = self.running_since[s].take() {
            self.states[s].elapsed += self.backend.now() - since;
        }
    }

    fn free_core_of(&mut self, s: usize) {
        for core in &mut self.cores {
            if core.active == Some(s) {
                core.active = None;
                core.slot_end = None;
            }
        }
    }

    fn on_event(&mut self, ev: BackendEvent) {
        let s = ev.solver;
        if self.states[s].status != RunStatus::Running {
            return;
        }
        let now = self.backend.now();
        if !self.cfg.anytime && now >= self.cfg.timeout {
            return;
        }
        match ev.kind {
            BackendEventKind::Solution(value) => {
                self.states[s].last_solution_at = Some(now);
                self.emit(Event::Solution { solver: self.name(s), value });
                let Some(v) = value.filter(|_| self.kind == ProblemKind::Cop) else {
                    return;
                };
                if let Some(b) = self.states[s].injected {
                    if !self.direction.better(v, b) {
                        self.emit(Event::BoundViolation { solver: self.name(s), value: v, bound: b });
                    }
                }
                let dir = self.direction;
                let own = self.states[s].best_bound.map_or(v, |o| dir.best(o, v));
                self.states[s].best_bound = Some(own);
                if self.global.is_none_or(|(g, _)| dir.better(v, g)) {
                    self.global = Some((v, s));
                    self.trace.push(TracePoint { t: now, v });
                }
            }
            BackendEventKind::Finished(outcome) => {
                self.emit(Event::Finished { solver: self.name(s), outcome });
                let outcome = match outcome {
                    Outcome::Uns if self.kind == ProblemKind::Cop && self.states[s].injected.is_some() => Outcome::Opt,
                    o => o,
                };
                if outcome.solves(self.kind) {
                    self.stop_clock(s);
                    self.states[s].status = RunStatus::Finished;
                    self.free_core_of(s);
                    self.answer = Some((outcome, s));
                } else {
                    self.fail(s, format!("ended with {outcome} without an answer"));
                }
            }
            BackendEventKind::Failed(reason) => self.fail(s, reason),
        }
    }

    fn fail(&mut self, s: usize, reason: String) {
        self.stop_clock(s);
        self.backend.kill(s);
        self.emit(Event::Failed { solver: self.name(s), reason });
        self.states[s].status = RunStatus::Discarded;
        self.emit(Event::Discarded { solver: self.name(s) });
        self.free_core_of(s);
    }

    fn suspend(&mut self, s: usize) {
        self.stop_clock(s);
        if self.backend.capabilities(s).supports_pause_resume {
            self.backend.suspend(s);
        } else {
            self.backend.kill(s);
            self.needs_relaunch[s] = true;
            self.emit(Event::PauseUnsupported { solver: self.name(s) });
        }
        self.states[s].status = RunStatus::Suspended;
        self.emit(Event::Suspended { solver: self.name(s) });
    }

    fn on_timers(&mut self) -> Result<(), ExecError> {
        let now = self.backend.now();
        if !self.cfg.anytime && now >= self.cfg.timeout {
            self.timed_out = true;
            self.emit(Event::Timeout);
            return Ok(());
        }
        for ci in 0..self.cores.len() {
            let (Some(s), Some(end)) = (self.cores[ci].active, self.cores[ci].slot_end) else {
                continue;
            };
            if now < end {
                continue;
            }
            let wait = self.cfg.wait_time_for(&self.states[s].solver);
            if apply_waiting_policy(&self.states[s], now, wait) {
                if !self.cores[ci].overrun_logged {
                    self.cores[ci].overrun_logged = true;
                    self.emit(Event::Overrun { solver: self.name(s) });
                }
            } else {
                self.suspend(s);
                self.cores[ci].active = None;
                self.cores[ci].slot_end = None;
            }
        }
        if self.kind == ProblemKind::Cop {
            let global = self.global.map(|g| g.0);
            let running: Vec<usize> = self.running().collect();
            for s in running {
                let threshold = self.cfg.restart_time_for(&self.states[s].solver);
                if !apply_restart_policy(&self.states[s], global, self.direction, now, threshold) {
                    continue;
                }
                if self.backend.capabilities(s).supports_bound_injection {
                    self.restart(s, global.expect("restart implies a global bound"));
                } else if !self.warned[s] {
                    self.warned[s] = true;
                    self.emit(Event::RestartUnsupported { solver: self.name(s) });
                }
            }
        }
        if let NeighbourhoodTask::Running { ready_at, .. } = &self.nbh {
            if now >= *ready_at {
                let NeighbourhoodTask::Running { result, .. } =
                    std::mem::replace(&mut self.nbh, NeighbourhoodTask::NotNeeded)
                else {
                    unreachable!()
                };
                self.emit(Event::NeighbourhoodComputed { size: result.len() });
                self.nbh = NeighbourhoodTask::Done(result);
            }
        }
        Ok(())
    }

    fn restart(&mut self, s: usize, bound: f64) {
        let now = self.backend.now();
        self.backend.kill(s);
        match self.backend.launch(s, Some(bound)) {
            Ok(()) => {
                let st = &mut self.states[s];
                st.restarts += 1;
                st.clock_origin = now;
                st.best_bound = Some(bound);
                st.injected = Some(bound);
                self.emit(Event::Restarted { solver: self.name(s), bound });
            }
            Err(e) => self.fail(s, e),
        }
    }

    fn injectable_bound(&self, s: usize) -> Option<f64> {
        if self.kind == ProblemKind::Cop && self.backend.capabilities(s).supports_bound_injection {
            self.global.map(|g| g.0)
        } else {
            None
        }
    }

    /// Starts or resumes `s` on core `ci`. Returns false if the launch failed.
    fn start(&mut self, s: usize, ci: usize, time: f64, slot_end: Option<f64>) -> bool {
        let now = self.backend.now();
        let resume = self.states[s].status == RunStatus::Suspended && !self.needs_relaunch[s];
        if resume {
            self.backend.resume(s);
            self.emit(Event::Resumed { solver: self.name(s), core: ci + 1 });
        } else {
            let bound = self.injectable_bound(s);
            if let Err(e) = self.backend.launch(s, bound) {
                self.states[s].status = RunStatus::Running;
                self.fail(s, e);
                return false;
            }
            self.needs_relaunch[s] = false;
            let st = &mut self.states[s];
            st.injected = bound;
            if bound.is_some() {
                st.best_bound = bound;
            }
            self.emit(Event::Launched { solver: self.name(s), core: ci + 1, bound });
        }
        let st = &mut self.states[s];
        st.status = RunStatus::Running;
        st.allotted = time;
        st.clock_origin = now;
        self.running_since[s] = Some(now);
        let core = &mut self.cores[ci];
        core.active = Some(s);
        core.slot_end = slot_end;
        core.overrun_logged = false;
        true
    }

    fn launchable(&self, s: usize) -> bool {
        matches!(self.states[s].status, RunStatus::Pending | RunStatus::Suspended)
    }

    fn dispatch(&mut self) -> Result<(), ExecError> {
        let now = self.backend.now();
        match self.phase {
            Phase::Presolve => {
                while let Some(ci) = self.cores.iter().position(|c| c.active.is_none()) {
                    let Some((s, t)) = self.fcfs.pop_front() else { break };
                    if self.launchable(s) {
                        self.start(s, ci, t, Some(now + t));
                    }
                }
                if self.fcfs.is_empty()
                    && matches!(self.nbh, NeighbourhoodTask::Waiting)
                    && self.running_count() < self.cores.len()
                {
                    self.emit(Event::NeighbourhoodStarted);
                    let clock = Instant::now();
                    let result = neighbours_of_kind(self.problem, self.kb, self.cfg.k)?;
                    let cost = self.backend.neighbourhood_cost(clock.elapsed().as_secs_f64());
                    self.nbh = NeighbourhoodTask::Running { ready_at: now + cost, result };
                }
            }
            Phase::Solving => {
                for ci in 0..self.cores.len() {
                    while self.cores[ci].active.is_none() {
                        let Some((s, t)) = self.cores[ci].queue.pop_front() else { break };
                        if !self.launchable(s) {
                            continue;
                        }
                        let end = (!self.cores[ci].queue.is_empty()).then_some(now + t);
                        self.start(s, ci, t, end);
                    }
                    if self.cores[ci].active.is_none() && self.cores[ci].had_work {
                        // replacement: any portfolio solver not run and not queued
                        let queued: Vec<usize> =
                            self.cores.iter().flat_map(|c| c.queue.iter().map(|q| q.0)).collect();
                        let spare = (0..self.states.len())
                            .find(|&s| self.states[s].status == RunStatus::Pending && !queued.contains(&s));
                        if let Some(s) = spare {
                            self.start(s, ci, f64::INFINITY, None);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> SolveResult {
        let running: Vec<usize> = self.running().collect();
        for s in running {
            self.stop_clock(s);
            self.backend.kill(s);
            self.states[s].status = RunStatus::Suspended;
            self.emit(Event::Killed { solver: self.name(s) });
        }
        let now = self.backend.now();
        let wall_time = if self.timed_out { self.cfg.timeout.min(now) } else { now };
        let global = self.global;
        let (outcome, winner, best_bound) = match self.answer {
            Some((o, s)) => {
                let bound = match (o, self.kind) {
                    (Outcome::Opt, ProblemKind::Cop) => global.map(|g| g.0).or(self.states[s].best_bound),
                    _ => None,
                };
                (o, Some(s), bound)
            }
            None => match global {
                Some((v, s)) if self.kind == ProblemKind::Cop => (Outcome::Sat, Some(s), Some(v)),
                _ => (Outcome::Unk, None, None),
            },
        };
        SolveResult {
            outcome,
            best_bound,
            winner: winner.map(|s| self.name(s)),
            wall_time,
            trace: self.trace.clone(),
            presolve_time: self.presolve_time,
            schedule: self.schedule.clone(),
            events: std::mem::take(&mut self.log),
        }
    }
}

/// Solves `problem` with `kb` as the training base.
pub fn solve<B: Backend>(
    problem: &ProblemInstance,
    cfg: &ExecutorConfig,
    kb: &KnowledgeBase,
    backend: B,
) -> Result<SolveResult, ExecError> {
    Executor::new(problem, kb, cfg, backend)?.solve()
}

/// Pre-solving only.
pub fn presolve<B: Backend>(
    problem: &ProblemInstance,
    cfg: &ExecutorConfig,
    kb: &KnowledgeBase,
    backend: B,
) -> Result<Presolved, ExecError> {
    Executor::new(problem, kb, cfg, backend)?.presolve()
}
