//! Line-oriented parser for the MiniZinc solver output convention.

use regex::Regex;

use crate::kb::{Outcome, ProblemKind};

pub const SOLUTION_SEPARATOR: &str = "----------";
pub const SEARCH_COMPLETE: &str = "==========";
pub const UNSATISFIABLE: &str = "=====UNSATISFIABLE=====";
pub const UNBOUNDED: &str = "=====UNBOUNDED=====";
pub const UNKNOWN: &str = "=====UNKNOWN=====";
pub const ERROR: &str = "=====ERROR=====";

/// Default objective extraction: `% obj = <n>` or an `objective = <n>`
/// assignment; the last match in a solution block wins.
pub const DEFAULT_OBJECTIVE_PATTERN: &str =
    r"^\s*(?:%\s*obj\s*=|objective\s*=)\s*(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*;?\s*$";

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedEvent {
    Solution(Option<f64>),
    Finished(Outcome),
    Failed(String),
}

#[derive(Debug)]
pub struct OutputParser {
    kind: ProblemKind,
    bound_injected: bool,
    objective: Regex,
    block_objective: Option<f64>,
    solutions: usize,
    done: bool,
}

impl OutputParser {
    pub fn new(kind: ProblemKind, bound_injected: bool, pattern: Option<&str>) -> Result<Self, regex::Error> {
        Ok(Self {
            kind,
            bound_injected,
            objective: Regex::new(pattern.unwrap_or(DEFAULT_OBJECTIVE_PATTERN))?,
            block_objective: None,
            solutions: 0,
            done: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn feed(&mut self, line: &str) -> Option<ParsedEvent> {
        if self.done {
            return None;
        }
        let line = line.trim_end();
        let ev = match line.trim() {
            SOLUTION_SEPARATOR => {
                self.solutions += 1;
                let v = self.block_objective.take();
                match self.kind {
                    ProblemKind::Csp => ParsedEvent::Finished(Outcome::Sat),
                    ProblemKind::Cop => ParsedEvent::Solution(v),
                }
            }
            SEARCH_COMPLETE => match self.kind {
                ProblemKind::Csp if self.solutions == 0 => ParsedEvent::Finished(Outcome::Uns),
                ProblemKind::Csp => ParsedEvent::Finished(Outcome::Sat),
                ProblemKind::Cop => ParsedEvent::Finished(Outcome::Opt),
            },
            // with an injected bound, "no better solution" proves the bound optimal
            UNSATISFIABLE if self.kind == ProblemKind::Cop && self.bound_injected => {
                ParsedEvent::Finished(Outcome::Opt)
            }
            UNSATISFIABLE => ParsedEvent::Finished(Outcome::Uns),
            UNBOUNDED => ParsedEvent::Finished(Outcome::Unb),
            UNKNOWN => ParsedEvent::Failed("solver reported UNKNOWN".into()),
            ERROR => ParsedEvent::Failed("solver reported ERROR".into()),
            _ => {
                if let Some(c) = self.objective.captures(line) {
                    self.block_objective = c.get(1).and_then(|m| m.as_str().parse().ok());
                }
                return None;
            }
        };
        if matches!(ev, ParsedEvent::Finished(_) | ParsedEvent::Failed(_)) {
            self.done = true;
        }
        Some(ev)
    }
}
