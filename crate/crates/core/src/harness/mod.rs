//! Scenario harness: workload generation, fault injection, deterministic and
//! multi-context runs, and the cross-model comparison.

pub mod compare;
pub mod faults;
pub mod run;
pub mod threaded;
pub mod workload;

pub use compare::{compare, CompareError, ComparisonReport};
pub use faults::FaultSpec;
pub use run::{execute, run, Model, RunError, RunOutcome, RunReport};
pub use workload::{generate_workload, InvalidSpec, WorkloadSpec};
