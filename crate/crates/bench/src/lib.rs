//! Master-worker case studies over distributed tuple spaces, and the
//! harness that runs, profiles and compares them.
//!
//! A run has one master and `w` workers, each with its own
//! [`tuplespace::LocalSpace`] served over TCP. All coordination between
//! roles goes through tuple operations; see [`protocol`] for the schemas.

pub mod cases;
pub mod cli;
pub mod config;
pub mod node;
pub mod protocol;
pub mod report;
pub mod roles;
pub mod run;
pub mod topology;

pub use cases::{CaseOutcome, Collected};
pub use config::{BenchConfig, Case, Distribution, Mode, RunConfig};
pub use run::{run, RunError, RunReport};
