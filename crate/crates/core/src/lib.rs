//! Asynchronous stochastic subgradient methods with momentum over a shared
//! parameter vector: a problem zoo with exact stationarity oracles, a
//! seeded discrete-event model of asynchronous execution, the optimizer
//! (shared-block, partitioned, and interleaved modes), a multi-threaded
//! shared-memory executor, and continuous-time trace diagnostics.

pub mod error;
pub mod oracle;

pub use error::{Error, Result};
pub mod sched;
pub mod cell;
pub mod engine;
pub mod interp;
pub mod shmexec;
pub mod trace;
