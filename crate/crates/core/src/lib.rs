//! Portfolio constraint solving with k-NN schedule prediction.
//!
//! - [`kb`]: knowledge bases of solver runs and k-NN over instance features.
//! - [`scheduler`]: SUNNY sequential schedules and their parallelisation.
//! - [`executor`]: pre-solving and solving against replay or process backends.
//! - [`metrics`]: proven, time, score and area, plus oracle baselines.
//! - [`bench`]: cross-validation by trace replay.

pub mod bench;
pub mod executor;
pub mod kb;
pub mod metrics;
pub mod par;
pub mod scheduler;
pub mod synth;

pub use bench::{cross_validate, cross_validate_with_plan, simulate_run, BenchReport, FoldPlan};
pub use executor::{presolve, solve, ExecutorConfig, SolveResult};
pub use kb::{KnowledgeBase, ProblemInstance};
pub use par::ExecMode;
pub use scheduler::{parallelise, sunny_schedule, ParallelSchedule, Schedule};
