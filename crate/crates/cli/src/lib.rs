//! Scenario-driven front end for `kp-rankone`: JSON scenarios in, CSV grids
//! and JSON verification reports out.

pub mod commands;
pub mod output;
pub mod scenario;

use kp_rankone::{Error, TripleReport};
use thiserror::Error;

pub use commands::{execute, run_command, Command, Flags, Outcome};
pub use scenario::{load_scenario, LoadedScenario, Scenario, ScenarioKind};

/// Exit status when every emitted report passes.
pub const EXIT_OK: i32 = 0;
/// Exit status for a failed check, an inadmissible input or a numerical error.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for malformed invocations and unreadable scenarios.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("inadmissible scenario: {reason}")]
    Inadmissible {
        reason: String,
        report: Option<Box<TripleReport>>,
    },

    #[error(transparent)]
    Numerical(Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension(_) | Error::NonFinite { .. } => CliError::Usage(e.to_string()),
            Error::Inadmissible { reason, report } => CliError::Inadmissible { reason, report },
            Error::Degenerate(msg) => CliError::Inadmissible {
                reason: msg,
                report: None,
            },
            other => CliError::Numerical(other),
        }
    }
}
