// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.
//!
//! Errors are split into two deliberate categories that callers (in
//! particular the command-line harness) treat differently:
//!
//! * [`Error::Validation`] — the *inputs* are unusable: malformed tree
//!   expressions, exponent ranges that violate the standing assumptions,
//!   grids that are not strictly increasing, configuration typos.  These
//!   are caller mistakes and map to exit code 2.
//! * [`Error::Diagnostic`] — the inputs were legal but a *numerical
//!   acceptance check* failed: a dyadic Riemann sum did not stabilize, a
//!   residual did not decay, a contraction ratio exceeded one.  These are
//!   honest reports of non-convergence and map to exit code 3.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Error type distinguishing input validation from numerical diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs failed validation before any numerics ran.
    #[error("validation: {0}")]
    Validation(String),

    /// The numerics ran but an acceptance/stability check failed.
    #[error("numerical diagnostic: {0}")]
    Diagnostic(String),

    /// Underlying I/O failure (file import/export).
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Construct a validation error from anything displayable.
    pub fn validation(msg: impl std::fmt::Display) -> Self {
        Error::Validation(msg.to_string())
    }

    /// Construct a numerical-diagnostic error from anything displayable.
    pub fn diagnostic(msg: impl std::fmt::Display) -> Self {
        Error::Diagnostic(msg.to_string())
    }
}
