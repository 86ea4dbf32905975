//! Peak-constrained charging scheduling for EVs spread over several stations.
//!
//! The [`scheduler`] module holds the smart charging scheduler (SCS), a
//! primal-dual greedy that also emits a dual certificate bounding its own
//! gap to the optimum. [`baseline`] is the per-station right-to-left greedy
//! it is compared against, [`oracle`] computes exact optima on small
//! instances, and [`metrics`] turns schedules into KPIs and checks
//! certificates. [`gen`] and [`cli`] drive experiments.

// Negated comparisons such as `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod error;
pub mod gen;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod scheduler;

pub use error::{GenError, MetricsError, ModelError, OracleError, ScheduleError};
pub use model::{ChargingRequest, DualCertificate, Instance, Schedule, Station};
pub use scheduler::{run_scs, Engine, RunOutcome};
