use std::fmt;

use thiserror::Error;

/// One violated scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

/// Every invariant a scenario failed, in field order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn names(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid scenario (")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error("loss must be non-negative, got {0} dB")]
    NegativeLoss(f64),

    #[error("delay of {delay_bits} slots must be at least 1 and below the slot count {slots}")]
    DelayOutOfRange { delay_bits: usize, slots: usize },

    #[error("coincidence-to-accidental ratio undefined: accidental probability is zero")]
    UndefinedCar,

    #[error("correlation undefined: the four counts sum to zero")]
    UndefinedCorrelation,

    #[error("{channel} arm emits {per_slot} detections per slot, outside the single-event-per-slot model")]
    RateOutOfRange {
        channel: &'static str,
        per_slot: f64,
    },

    #[error("event stream not sorted at index {0}")]
    UnsortedStream(usize),

    #[error("window [{lo}, {hi}] ps lies outside histogram range [{range_lo}, {range_hi}) ps")]
    WindowOutOfRange {
        lo: f64,
        hi: f64,
        range_lo: f64,
        range_hi: f64,
    },

    #[error("fringe fit failed: {0}")]
    Fringe(String),

    #[error("criterion {criterion} not reachable even at zero distance (best achievable {best})")]
    CriterionUnreachable { criterion: String, best: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
