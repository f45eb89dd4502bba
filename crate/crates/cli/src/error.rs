//! Error classification for exit codes: validation problems (bad flags,
//! malformed config or input files) exit 1, runtime failures exit 2.

#[derive(Debug)]
pub enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &anyhow::Error {
        match self {
            CliError::Validation(e) | CliError::Runtime(e) => e,
        }
    }
}

pub fn validation(e: anyhow::Error) -> CliError {
    CliError::Validation(e)
}

pub fn runtime(e: anyhow::Error) -> CliError {
    CliError::Runtime(e)
}
