use std::path::PathBuf;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdrError {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eigensolver did not converge within {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NumericalFailure { sweeps: usize, off_norm: f64 },

    #[error("covariance is singular: smallest eigenvalue {min:e} is below {floor:e} x largest {max:e}")]
    SingularCovariance { min: f64, max: f64, floor: f64 },

    #[error("eigenvalue {index} is not separated from its neighbours (gap {gap:e})")]
    DegenerateEigenvalue { index: usize, gap: f64 },

    #[error("need more observations than predictors: n = {n}, p = {p}")]
    InsufficientData { n: usize, p: usize },

    #[error("direction {column} vanishes after back-transformation")]
    DegenerateDirection { column: usize },

    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("CSV parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("response column not found: {0}")]
    MissingColumn(String),

    #[error("too many slices: n = {n} observations cannot fill {slices} slices of at least 2")]
    TooManySlices { n: usize, slices: usize },

    #[error("slice {slice} has fewer than 2 observations{}", value.map(|v| format!(" (response value {v})")).unwrap_or_default())]
    SingletonSlice { slice: usize, value: Option<f64> },

    #[error("response takes {distinct} distinct value(s); at least 2 are required")]
    DegenerateResponse { distinct: usize },

    #[error("slice size c = {0} is too small for the bias correction (need c >= 2)")]
    InvalidSliceSize(usize),

    #[error("basis does not have full column rank")]
    DegenerateSubspace,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<SdrError>,
    },
}

impl SdrError {
    /// Coarse category used by front ends to pick an exit status.
    pub fn kind(&self) -> ErrorKind {
        use SdrError::*;
        match self {
            TooManySlices { .. } | InvalidConfig(_) | DegenerateDesign(_) | InvalidSliceSize(_) => {
                ErrorKind::Usage
            }
            Io { .. }
            | Parse { .. }
            | MissingColumn(_)
            | InsufficientData { .. }
            | SingletonSlice { .. }
            | DegenerateResponse { .. }
            | DimensionMismatch(_) => ErrorKind::Data,
            InvalidMatrix(_)
            | NumericalFailure { .. }
            | SingularCovariance { .. }
            | DegenerateEigenvalue { .. }
            | DegenerateDirection { .. }
            | DegenerateSubspace => ErrorKind::Numerical,
            Replicate { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

pub type Result<T> = std::result::Result<T, SdrError>;
