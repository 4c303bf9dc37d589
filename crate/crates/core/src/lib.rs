#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Time-bin entangled photon-pair distribution: analytic rate models, a
//! seeded Monte Carlo of detector click streams, time-interval-analyzer
//! emulation, fringe and CHSH analysis, and link-budget planning.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod montecarlo;
pub mod planner;
pub mod quantum;
pub mod report;
pub mod scenario;
pub mod tia;

pub use error::{Error, Result};
pub use scenario::{ExperimentScenario, ValidatedScenario};
