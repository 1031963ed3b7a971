//! Optimization, training loop, run reports and the placement sweep.

pub mod adamax;
pub mod report;
pub mod sweep;
pub mod trainer;

pub use adamax::{Adamax, AdamaxConfig};
pub use report::{RunReport, RunStatus};
pub use sweep::{sweep, SweepTable};
pub use trainer::{evaluate, train, TrainOutcome, TrainSettings};
