//! Error classification for the scenario runner: configuration errors exit
//! with code 2, runtime errors with code 3, and either way one JSON object
//! describing the failure goes to stderr.

use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// The configuration (file, flags, or parameter values) was rejected.
    Config(String),
    /// An accepted configuration failed while running.
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    /// One-line JSON rendering for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrorBody<'a> {
            error: &'a str,
            kind: &'a str,
        }
        serde_json::to_string(&ErrorBody { error: self.message(), kind: self.kind() })
            .unwrap_or_else(|_| format!("{{\"error\": \"{}\"}}", self.kind()))
    }
}

impl From<enskog_core::Error> for CliError {
    fn from(e: enskog_core::Error) -> Self {
        if e.is_rejected_input() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}
