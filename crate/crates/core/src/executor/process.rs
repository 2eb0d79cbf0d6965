//! External solver processes against the wall clock.
//!
//! Every launch runs the adapter's command line under `sh -c` in its own
//! process group, so suspension (`SIGSTOP`), resumption (`SIGCONT`) and
//! termination reach the whole solver tree. A reader thread per launch
//! parses stdout and forwards events tagged with a launch generation; events
//! of killed generations are dropped.

use std::io::{BufRead, BufReader};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::kb::ProblemKind;

use super::protocol::{OutputParser, ParsedEvent};
use super::registry::{AdapterBackend, SolverAdapter};
use super::{Backend, BackendEvent, BackendEventKind, Capabilities};

/// Upper bound on a single blocking wait.
pub const PROCESS_TICK: Duration = Duration::from_millis(100);

enum Message {
    Event(ParsedEvent),
    Exited { clean: bool },
}

struct Live {
    child: Child,
    generation: u64,
}

pub struct ProcessBackend {
    adapters: Vec<SolverAdapter>,
    instance: String,
    kind: ProblemKind,
    memory_limit_mb: Option<u64>,
    free_search: bool,
    start: Instant,
    live: Vec<Option<Live>>,
    generation: u64,
    tx: Sender<(usize, u64, Message)>,
    rx: Receiver<(usize, u64, Message)>,
}

impl ProcessBackend {
    pub fn new(adapters: Vec<SolverAdapter>, instance: impl Into<String>, kind: ProblemKind) -> Self {
        let (tx, rx) = channel();
        let n = adapters.len();
        Self {
            adapters,
            instance: instance.into(),
            kind,
            memory_limit_mb: None,
            free_search: false,
            start: Instant::now(),
            live: (0..n).map(|_| None).collect(),
            generation: 0,
            tx,
            rx,
        }
    }

    pub fn memory_limit_mb(mut self, limit: Option<u64>) -> Self {
        self.memory_limit_mb = limit;
        self
    }

    pub fn free_search(mut self, on: bool) -> Self {
        self.free_search = on;
        self
    }

    fn signal(&self, solver: usize, sig: libc::c_int) {
        if let Some(live) = &self.live[solver] {
            let pgid = live.child.id() as libc::pid_t;
            // SAFETY: plain syscall on a process group we created
            unsafe {
                libc::killpg(pgid, sig);
            }
        }
    }

    fn is_live(&self, solver: usize, generation: u64) -> bool {
        self.live[solver].as_ref().is_some_and(|l| l.generation == generation)
    }

    fn translate(&mut self, solver: usize, generation: u64, msg: Message, out: &mut Vec<BackendEvent>) {
        if !self.is_live(solver, generation) {
            return;
        }
        let kind = match msg {
            Message::Event(ParsedEvent::Solution(v)) => BackendEventKind::Solution(v),
            Message::Event(ParsedEvent::Finished(o)) => BackendEventKind::Finished(o),
            Message::Event(ParsedEvent::Failed(r)) => BackendEventKind::Failed(r),
            Message::Exited { clean: true } => return,
            Message::Exited { clean: false } => {
                BackendEventKind::Failed("exited without a terminal marker".into())
            }
        };
        out.push(BackendEvent { solver, kind });
    }
}

impl Backend for ProcessBackend {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn capabilities(&self, solver: usize) -> Capabilities {
        self.adapters[solver].capabilities
    }

    fn launch(&mut self, solver: usize, bound: Option<f64>) -> Result<(), String> {
        self.kill(solver);
        let adapter = &self.adapters[solver];
        let AdapterBackend::ExternalProcess(spec) = &adapter.backend else {
            return Err(format!("solver {} has no process adapter", adapter.solver_id));
        };
        let line = spec.render(&self.instance, bound, self.free_search);
        debug!("launch {}: {line}", adapter.solver_id);
        let mut parser = OutputParser::new(self.kind, bound.is_some(), spec.objective_pattern.as_deref())
            .map_err(|e| e.to_string())?;
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&line)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .process_group(0);
        if let Some(mb) = self.memory_limit_mb {
            let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
            // SAFETY: setrlimit is async-signal-safe
            unsafe {
                cmd.pre_exec(move || {
                    let lim = libc::rlimit { rlim_cur: bytes, rlim_max: bytes };
                    if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                        return Err(std::io::Error::last_os_error());
                    }
                    Ok(())
                });
            }
        }
        let mut child = cmd.spawn().map_err(|e| format!("cannot start {line:?}: {e}"))?;
        let stdout = child.stdout.take().expect("piped stdout");
        self.generation += 1;
        let generation = self.generation;
        let tx = self.tx.clone();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if let Some(ev) = parser.feed(&line) {
                    if tx.send((solver, generation, Message::Event(ev))).is_err() {
                        return;
                    }
                }
            }
            let _ = tx.send((solver, generation, Message::Exited { clean: parser.is_done() }));
        });
        self.live[solver] = Some(Live { child, generation });
        Ok(())
    }

    fn suspend(&mut self, solver: usize) {
        self.signal(solver, libc::SIGSTOP);
    }

    fn resume(&mut self, solver: usize) {
        self.signal(solver, libc::SIGCONT);
    }

    fn kill(&mut self, solver: usize) {
        self.signal(solver, libc::SIGKILL);
        self.signal(solver, libc::SIGCONT);
        if let Some(mut live) = self.live[solver].take() {
            if let Err(e) = live.child.wait() {
                warn!("reaping solver {solver}: {e}");
            }
        }
    }

    fn wait(&mut self, until: Option<f64>) -> Vec<BackendEvent> {
        let mut out = Vec::new();
        loop {
            if until.is_none() && self.live.iter().all(Option::is_none) {
                return out;
            }
            let step = match until {
                Some(u) => {
                    let left = u - self.now();
                    if left <= 0.0 {
                        return out;
                    }
                    PROCESS_TICK.min(Duration::from_secs_f64(left))
                }
                None => PROCESS_TICK,
            };
            match self.rx.recv_timeout(step) {
                Ok((s, g, msg)) => {
                    self.translate(s, g, msg, &mut out);
                    while let Ok((s, g, msg)) = self.rx.try_recv() {
                        self.translate(s, g, msg, &mut out);
                    }
                    if !out.is_empty() {
                        return out;
                    }
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return out,
            }
        }
    }

    fn neighbourhood_cost(&self, measured: f64) -> f64 {
        measured
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        for s in 0..self.live.len() {
            self.kill(s);
        }
    }
}
