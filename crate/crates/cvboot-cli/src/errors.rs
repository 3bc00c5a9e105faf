use std::fmt;

/// Front-end errors: everything carries a stable machine-readable code.
#[derive(Debug)]
pub enum CliError {
    Lib(cvboot::Error),
    MissingColumn(String),
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    EmptyAfterFiltering,
    Io(String),
    BadArgs(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::MissingColumn(c) => write!(f, "column {c:?} not found in header"),
            CliError::NonNumericCell { row, column, value } => {
                write!(f, "non-numeric value {value:?} at row {row}, column {column:?}")
            }
            CliError::EmptyAfterFiltering => {
                write!(f, "fewer than 2 rows remain after dropping incomplete rows")
            }
            CliError::Io(m) => write!(f, "{m}"),
            CliError::BadArgs(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn code(&self) -> String {
        match self {
            CliError::Lib(e) => e.code().to_string(),
            CliError::MissingColumn(_) => "missing_column".into(),
            CliError::NonNumericCell { .. } => "non_numeric_cell".into(),
            CliError::EmptyAfterFiltering => "empty_after_filtering".into(),
            CliError::Io(_) => "io".into(),
            CliError::BadArgs(_) => "bad_args".into(),
        }
    }
}

impl From<cvboot::Error> for CliError {
    fn from(e: cvboot::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
