use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Ball at or inside the eye, or a direction vector of zero length.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("malformed trial: {0}")]
    MalformedTrial(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("training diverged (non-finite loss) at epoch {epoch} for horizon {horizon_frames}")]
    TrainingDiverged { epoch: usize, horizon_frames: usize },

    #[error("normal matrix is ill-conditioned; use a ridge penalty > 0 ({0})")]
    IllConditioned(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv { context: context.into(), source }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }
}
