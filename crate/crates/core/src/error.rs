use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("mesh validation error: {0}")]
    MeshValidation(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("assembly error: tet {tet}: {reason}")]
    Assembly { tet: usize, reason: String },

    #[error("factorization error: {0}")]
    Factorization(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("eigenvalue {value} has multiplicity {multiplicity}; shape derivatives need a simple eigenvalue")]
    NotSimple { value: f64, multiplicity: usize },

    #[error("eigenvector not normalized: |x^T M x - 1| = {residual:e}")]
    Normalization { residual: f64 },

    #[error("inadmissible deformation: tet {tet} has det J = {det:e}; admissible for |t| < {t_max:e}")]
    Admissibility { tet: usize, det: f64, t_max: f64 },

    #[error("connectivity mismatch: {0}")]
    ConnectivityMismatch(String),

    #[error("eigenvalue tracking failed: {0}")]
    Tracking(String),

    #[error("deformed/transformed spectra disagree: relative discrepancy {discrepancy:e} > {tol:e}")]
    Equivalence { discrepancy: f64, tol: f64 },

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "E_PARSE",
            Error::MeshValidation(_) => "E_MESH",
            Error::Usage(_) => "E_USAGE",
            Error::Assembly { .. } => "E_ASSEMBLY",
            Error::Factorization(_) => "E_FACTORIZATION",
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::NotSimple { .. } => "E_NOT_SIMPLE",
            Error::Normalization { .. } => "E_NORMALIZATION",
            Error::Admissibility { .. } => "E_ADMISSIBILITY",
            Error::ConnectivityMismatch(_) => "E_CONNECTIVITY",
            Error::Tracking(_) => "E_TRACKING",
            Error::Equivalence { .. } => "E_EQUIVALENCE",
            Error::Consistency(_) => "E_CONSISTENCY",
            Error::Io(_) => "E_IO",
        }
    }

    /// Process exit status for this error (distinct per code, never 0 or 1).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) => 10,
            Error::MeshValidation(_) => 11,
            Error::Usage(_) => 12,
            Error::Assembly { .. } => 13,
            Error::Factorization(_) => 14,
            Error::InvalidInput(_) => 15,
            Error::NotSimple { .. } => 16,
            Error::Normalization { .. } => 17,
            Error::Admissibility { .. } => 18,
            Error::ConnectivityMismatch(_) => 19,
            Error::Tracking(_) => 20,
            Error::Equivalence { .. } => 21,
            Error::Consistency(_) => 22,
            Error::Io(_) => 23,
        }
    }
}
