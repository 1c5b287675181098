use sentipanel_core::Error as CoreError;
use sentipanel_panel::PanelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or command line.
    #[error("{0}")]
    Config(String),

    /// Malformed input file.
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{what}: {m}")),
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Format { .. } => CliError::Input(e.to_string()),
            CoreError::Config(_) | CoreError::UnknownTask(_) | CoreError::DuplicateTask(_) => CliError::Config(e.to_string()),
            CoreError::CheckpointVersion(_) | CoreError::CheckpointTruncated(_) | CoreError::CheckpointShape(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else if is_spec(&e) {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn is_spec(e: &PanelError) -> bool {
    match e {
        PanelError::Spec(_) => true,
        PanelError::InSpec { source, .. } => is_spec(source),
        _ => false,
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
