use alloc::string::String;

/// Errors raised by the parser core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty tree at line {line}")]
    EmptyTree { line: usize },
    #[error("data error in {record}: {message}")]
    Data { record: String, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("unknown parse symbol `{0}`")]
    Vocabulary(String),
    #[error("sentence {index}: {message}")]
    Pairing { index: usize, message: String },
    #[error("training error: {0}")]
    Training(String),
    #[error("utterance {0} has no time alignments; use the text-only model")]
    Backoff(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}
