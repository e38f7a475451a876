//! Command-line driver: configuration, the end-to-end pipeline and run
//! manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;

/// Context marker for errors caused by bad input (exit status 4).
#[derive(Debug, Clone, Copy)]
pub struct InputError;

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("input error")
    }
}

pub const EXIT_INPUT_ERROR: i32 = 4;
pub const EXIT_OTHER_ERROR: i32 = 1;

/// Exit status for a failed command.
pub fn error_exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<InputError>().is_some() {
        return EXIT_INPUT_ERROR;
    }
    let input = err.chain().any(|c| {
        matches!(
            c.downcast_ref::<ctxrand::Error>(),
            Some(
                ctxrand::Error::InvalidArgument(_)
                    | ctxrand::Error::InsufficientData(_)
                    | ctxrand::Error::Parse { .. }
                    | ctxrand::Error::DigestMismatch { .. }
                    | ctxrand::Error::NoViolation { .. }
                    | ctxrand::Error::Io(_)
                    | ctxrand::Error::Json(_)
            )
        ) || c.is::<std::io::Error>()
    });
    if input {
        EXIT_INPUT_ERROR
    } else {
        EXIT_OTHER_ERROR
    }
}
