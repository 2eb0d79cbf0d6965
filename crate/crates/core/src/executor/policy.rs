//! Waiting and restarting thresholds.

use crate::kb::Direction;

use super::RunState;

/// Whether a solver whose slot has expired keeps running: only while it
/// found a solution within the last `wait` seconds.
pub fn apply_waiting_policy(state: &RunState, now: f64, wait: f64) -> bool {
    match state.last_solution_at {
        Some(t) => now < t + wait,
        None => false,
    }
}

/// Whether a running solver should be restarted with `global_best`.
///
/// Fires once the solver has gone `restart` seconds without a solution
/// (counting from its last launch, resume or restart) and its own bound is
/// strictly worse than the global one. A missing own bound is worse than
/// any global bound.
pub fn apply_restart_policy(
    state: &RunState,
    global_best: Option<f64>,
    direction: Direction,
    now: f64,
    restart: f64,
) -> bool {
    let Some(global) = global_best else {
        return false;
    };
    let obsolete = match state.best_bound {
        Some(own) => direction.better(global, own),
        None => true,
    };
    obsolete && now >= quiet_since(state) + restart
}

/// Start of the current no-solution interval.
pub(crate) fn quiet_since(state: &RunState) -> f64 {
    match state.last_solution_at {
        Some(t) => t.max(state.clock_origin),
        None => state.clock_origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::RunStatus;

    fn running(last: Option<f64>, bound: Option<f64>) -> RunState {
        RunState {
            solver: "s".into(),
            status: RunStatus::Running,
            allotted: 10.0,
            elapsed: 0.0,
            last_solution_at: last,
            best_bound: bound,
            restarts: 0,
            clock_origin: 0.0,
            injected: None,
        }
    }

    #[test]
    fn waiting_policy() {
        assert!(apply_waiting_policy(&running(Some(9.0), None), 10.0, 2.0));
        assert!(!apply_waiting_policy(&running(None, None), 10.0, 2.0));
        assert!(!apply_waiting_policy(&running(Some(10.0), None), 10.0, 0.0));
        assert!(!apply_waiting_policy(&running(Some(8.0), None), 10.0, 2.0));
        // the expiry deadline is computed as last + wait and must be final
        assert!(!apply_waiting_policy(&running(Some(0.1), None), 0.1 + 2.0, 2.0));
    }

    #[test]
    fn restart_policy() {
        let min = Direction::Minimize;
        // 6 s quiet, own 959 vs global 958
        assert!(apply_restart_policy(&running(Some(4.0), Some(959.0)), Some(958.0), min, 10.0, 5.0));
        // not obsolete
        assert!(!apply_restart_policy(&running(Some(0.0), Some(958.0)), Some(958.0), min, 1e6, 5.0));
        // threshold not reached
        assert!(!apply_restart_policy(&running(Some(7.0), Some(959.0)), Some(958.0), min, 10.0, 5.0));
        // no own bound counts as worse
        assert!(apply_restart_policy(&running(None, None), Some(1.0), min, 5.0, 5.0));
        assert!(!apply_restart_policy(&running(None, None), None, min, 50.0, 5.0));
        assert!(apply_restart_policy(&running(Some(3.31), Some(959.0)), Some(958.0), min, 3.31 + 5.0, 5.0));
        // maximization flips the comparison
        let max = Direction::Maximize;
        assert!(apply_restart_policy(&running(Some(0.0), Some(10.0)), Some(12.0), max, 5.0, 5.0));
        assert!(!apply_restart_policy(&running(Some(0.0), Some(12.0)), Some(10.0), max, 5.0, 5.0));
    }
}
