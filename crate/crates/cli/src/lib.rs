//! Command-line driver for the irrigation network: scenario validation,
//! batch runs and comparisons, and the edge-node service.

pub mod args;
pub mod batch;
pub mod gateway;
pub mod service;

/// A problem with the user's input (scenario or flags). Exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

/// Exit status for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InputError>().is_some() {
        EXIT_INPUT
    } else {
        EXIT_FAILURE
    }
}
