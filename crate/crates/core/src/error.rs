use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: requested {requested} from {available}")]
    InsufficientPoints { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty foreground")]
    EmptyForeground,

    #[error("contrast undefined: need at least 2 samples, got {0}")]
    ContrastUndefined(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("episode constraint unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("object placement failed after {0} retries")]
    PlacementFailed(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::NonFinite(_) | Error::Singular(_) | Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
