//! Exit-code classification.

use std::fmt;

use tracerank_core::{HarnessError, ModelError, PrioritizeError};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

/// Bad flags, config keys or option combinations.
#[derive(Debug)]
pub struct Usage(pub String);

/// A result the program itself should never produce.
#[derive(Debug)]
pub struct Invariant(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Usage {}
impl std::error::Error for Invariant {}

/// Usage problems exit 1, invariant violations 3, everything else
/// (unreadable or malformed inputs) 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return EXIT_USAGE;
        }
        if cause.is::<Invariant>() {
            return EXIT_INVARIANT;
        }
        if let Some(HarnessError::Config(_) | HarnessError::Experiment(_) | HarnessError::Infeasible(_)) =
            cause.downcast_ref::<HarnessError>()
        {
            return EXIT_USAGE;
        }
        if let Some(ModelError::InvalidHyperparams(_)) = cause.downcast_ref::<ModelError>() {
            return EXIT_USAGE;
        }
        if let Some(PrioritizeError::InvalidTopK) = cause.downcast_ref::<PrioritizeError>() {
            return EXIT_USAGE;
        }
    }
    EXIT_DATA
}
