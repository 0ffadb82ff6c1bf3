use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("construction error: {0}")]
    Construction(String),
    #[error("rank condition fails at x={x:?}, omega={omega:?}")]
    Singular { x: Vec<f64>, omega: Vec<f64> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("lattice too coarse: spacing {spacing:e} exceeds {required_spacing:e} (needs about {required_points} points)")]
    Resolution {
        spacing: f64,
        required_spacing: f64,
        required_points: usize,
    },
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("not a transverse complete intersection: rank drops at {witness:?}")]
    NotTci { witness: Vec<f64> },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resolution { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
