//! Trace replay on a virtual clock.
//!
//! Each solver replays its knowledge-base record for the instance, measured
//! in its own solver time: suspension freezes that clock. A relaunch with a
//! bound replays the bound-conditioned record when the bound is at least as
//! good as the one it was recorded with; otherwise the original record with
//! every solution not strictly better than the bound filtered out.

use crate::kb::{Direction, KnowledgeBase, Outcome, ProblemKind, SolverRecord, TracePoint};

use super::{Backend, BackendEvent, BackendEventKind, Capabilities};

#[derive(Debug, Clone)]
struct Script {
    trace: Vec<TracePoint>,
    end: Option<(f64, Outcome)>,
}

#[derive(Debug, Clone)]
struct Run {
    script: Script,
    progress: f64,
    since: Option<f64>,
    cursor: usize,
    end_reported: bool,
}

impl Run {
    /// Solver time of the next scripted event.
    fn next_milestone(&self, failure: Option<f64>) -> Option<f64> {
        let mut next = self.script.trace.get(self.cursor).map(|p| p.t);
        let mut take = |x: f64| next = Some(next.map_or(x, |n: f64| n.min(x)));
        if let Some((t, _)) = self.script.end.filter(|_| !self.end_reported) {
            take(t);
        }
        if let Some(f) = failure {
            take(f);
        }
        next.map(|t| t.max(self.progress))
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBackend {
    kind: ProblemKind,
    direction: Direction,
    timeout: f64,
    records: Vec<SolverRecord>,
    caps: Vec<Capabilities>,
    failures: Vec<Option<f64>>,
    runs: Vec<Option<Run>>,
    clock: f64,
    overhead: f64,
}

impl ReplayBackend {
    /// Replays the records of knowledge-base instance `instance`, in
    /// portfolio order. `overhead` is the virtual neighbourhood cost.
    pub fn new(kb: &KnowledgeBase, instance: usize, overhead: f64) -> Self {
        let p = &kb.instances()[instance];
        Self::from_records(p.kind, p.direction, kb.records(instance).to_vec(), kb.timeout(), overhead)
    }

    pub fn from_records(
        kind: ProblemKind,
        direction: Direction,
        records: Vec<SolverRecord>,
        timeout: f64,
        overhead: f64,
    ) -> Self {
        let n = records.len();
        Self {
            kind,
            direction,
            timeout,
            records,
            caps: vec![Capabilities::default(); n],
            failures: vec![None; n],
            runs: vec![None; n],
            clock: 0.0,
            overhead,
        }
    }

    /// Makes `solver` fail after `at` seconds of solver time.
    pub fn with_failure(mut self, solver: usize, at: f64) -> Self {
        self.failures[solver] = Some(at);
        self
    }

    pub fn with_capabilities(mut self, solver: usize, caps: Capabilities) -> Self {
        self.caps[solver] = caps;
        self
    }

    /// Starts the clock at `t` instead of 0.
    pub fn starting_at(mut self, t: f64) -> Self {
        self.clock = t;
        self
    }

    fn terminal(&self, outcome: Outcome, time: f64) -> Option<(f64, Outcome)> {
        (outcome.solves(self.kind) && time < self.timeout).then_some((time, outcome))
    }

    fn script(&self, solver: usize, bound: Option<f64>) -> Script {
        let r = &self.records[solver];
        let Some(b) = bound.filter(|_| self.kind == ProblemKind::Cop) else {
            return Script {
                trace: r.trace.clone(),
                end: self.terminal(r.outcome, r.time),
            };
        };
        let dir = self.direction;
        let (trace, outcome, time) = match &r.with_bound {
            Some(w) if dir.better_or_equal(b, w.bound) => (&w.trace, w.outcome, w.time),
            _ => (&r.trace, r.outcome, r.time),
        };
        Script {
            trace: trace.iter().copied().filter(|p| dir.better(p.v, b)).collect(),
            end: self.terminal(outcome, time),
        }
    }

    fn event_time(&self, s: usize) -> Option<f64> {
        let run = self.runs[s].as_ref()?;
        let since = run.since?;
        run.next_milestone(self.failures[s]).map(|m| since + (m - run.progress))
    }

    fn advance(&mut self, to: f64) {
        for run in self.runs.iter_mut().flatten() {
            if let Some(since) = run.since {
                run.progress += to - since;
                run.since = Some(to);
            }
        }
        self.clock = to;
    }

    fn fire(&mut self, s: usize, out: &mut Vec<BackendEvent>) {
        let failure = self.failures[s];
        let Some(run) = self.runs[s].as_mut() else { return };
        let Some(m) = run.next_milestone(failure) else { return };
        run.progress = m;
        while let Some(p) = run.script.trace.get(run.cursor).filter(|p| p.t <= m) {
            let v = p.v;
            run.cursor += 1;
            out.push(BackendEvent { solver: s, kind: BackendEventKind::Solution(Some(v)) });
        }
        if let Some((t, outcome)) = run.script.end.filter(|_| !run.end_reported) {
            if t <= m {
                run.end_reported = true;
                out.push(BackendEvent { solver: s, kind: BackendEventKind::Finished(outcome) });
                self.runs[s] = None;
                return;
            }
        }
        if failure.is_some_and(|f| f <= m) {
            out.push(BackendEvent {
                solver: s,
                kind: BackendEventKind::Failed(format!("injected failure at {m}")),
            });
            self.runs[s] = None;
        }
    }
}

impl Backend for ReplayBackend {
    fn now(&self) -> f64 {
        self.clock
    }

    fn capabilities(&self, solver: usize) -> Capabilities {
        self.caps[solver]
    }

    fn launch(&mut self, solver: usize, bound: Option<f64>) -> Result<(), String> {
        let script = self.script(solver, bound);
        self.runs[solver] = Some(Run {
            script,
            progress: 0.0,
            since: Some(self.clock),
            cursor: 0,
            end_reported: false,
        });
        Ok(())
    }

    fn suspend(&mut self, solver: usize) {
        let clock = self.clock;
        if let Some(run) = self.runs[solver].as_mut() {
            if let Some(since) = run.since.take() {
                run.progress += clock - since;
            }
        }
    }

    fn resume(&mut self, solver: usize) {
        let clock = self.clock;
        if let Some(run) = self.runs[solver].as_mut() {
            run.since.get_or_insert(clock);
        }
    }

    fn kill(&mut self, solver: usize) {
        self.runs[solver] = None;
    }

    fn wait(&mut self, until: Option<f64>) -> Vec<BackendEvent> {
        let times: Vec<Option<f64>> = (0..self.runs.len()).map(|s| self.event_time(s)).collect();
        let next = times.iter().flatten().copied().fold(None, |a: Option<f64>, t| Some(a.map_or(t, |a| a.min(t))));
        let until = until.map(|u| u.max(self.clock));
        match (next, until) {
            (None, None) => Vec::new(),
            (None, Some(u)) => {
                self.advance(u);
                Vec::new()
            }
            (Some(n), Some(u)) if u < n => {
                self.advance(u);
                Vec::new()
            }
            (Some(n), _) => {
                self.advance(n);
                let mut out = Vec::new();
                for (s, t) in times.iter().enumerate() {
                    if *t == Some(n) {
                        self.fire(s, &mut out);
                    }
                }
                out
            }
        }
    }

    fn neighbourhood_cost(&self, _measured: f64) -> f64 {
        self.overhead
    }
}
