use thiserror::Error;

pub type Result<T> = std::result::Result<T, PanelError>;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("panel file is missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate row for city `{city}` on {date} (lines {first_line} and {second_line})")]
    DuplicateKey { city: String, date: String, first_line: usize, second_line: usize },

    #[error("invalid row for city `{city}` on {date}: {message}")]
    InvalidRow { city: String, date: String, message: String },

    #[error("column `{column}` is linearly dependent on [{}]", depends_on.join(", "))]
    Collinear { column: String, depends_on: Vec<String> },

    #[error("no usable rows: {0}")]
    NoRows(String),

    #[error("insufficient degrees of freedom: {0}")]
    DegreesOfFreedom(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("{spec}: {source}")]
    InSpec { spec: String, source: Box<PanelError> },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PanelError {
    /// Errors caused by malformed input files rather than by the data's numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            PanelError::MissingColumn(_) | PanelError::Parse { .. } | PanelError::DuplicateKey { .. } => true,
            PanelError::InSpec { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
