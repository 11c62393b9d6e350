use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("quadrature under-resolved: {n_points} points for {n_modes} modes (need at least {required})")]
    Resolution {
        n_points: usize,
        n_modes: usize,
        required: usize,
    },

    #[error("ratio undefined for the zero field")]
    UndefinedRatio,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("infeasible constants: {0}")]
    Infeasible(String),

    #[error("trajectory diverged at step {step} (replicate {replicate})")]
    Divergence { step: usize, replicate: u64 },

    #[error("geometry mismatch: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
