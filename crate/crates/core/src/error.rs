use crate::faults::Scenario;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system{}: {context}", scenario.map(|s| format!(" in scenario {s}")).unwrap_or_default())]
    Singular {
        scenario: Option<Scenario>,
        context: String,
    },

    #[error("network is not connected: bus {0} cannot be reached from the relay")]
    Disconnected(usize),

    #[error("degenerate {scenario} loop: |i_A| = {magnitude:.3e}")]
    DegenerateLoop { scenario: Scenario, magnitude: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    /// Exit code for the command line: input problems map to 1, numerical ones to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Disconnected(_) | Error::Unsupported(_) => 1,
            Error::Singular { .. } | Error::DegenerateLoop { .. } | Error::Solver(_) => 2,
        }
    }
}
