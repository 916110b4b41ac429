use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("unsupported polynomial degree {0} (expected 1 or 2)")]
    UnsupportedDegree(usize),

    #[error("field lives on the wrong region: expected {expected}, got {got}")]
    RegionMismatch { expected: String, got: String },

    #[error("velocity history does not cover t = {t}: history ends at {t_end}")]
    TimeOutsideHistory { t: f64, t_end: f64 },

    #[error("velocity history gap {gap} exceeds the allowed step {max_gap} at index {index}")]
    HistoryGap { index: usize, gap: f64, max_gap: f64 },

    #[error(
        "determinant floor violated: det = {det:.6e} < {floor:.6e} at cell {cell}, point {point}"
    )]
    DetFloor {
        det: f64,
        floor: f64,
        cell: usize,
        point: usize,
    },

    #[error("strong divergence of the stress needs a degree >= 2 space (got degree {0})")]
    DegreeTooLowForStrongForm(usize),

    #[error("traction history must start at t = 0 (got {0})")]
    HistoryNotFromZero(f64),

    #[error("interface datum must vanish at t = 0 (|g(0)| = {0:.3e})")]
    NonzeroInitialDatum(f64),

    #[error("initial velocity and structure velocity disagree at interface dof {dof}: |v0 - xi1| = {defect:.3e}")]
    InterfaceMismatch { dof: usize, defect: f64 },

    #[error("divergence-free space is empty: constraint matrix has full column rank")]
    EmptyNullspace,

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("pressure recovery failed: discrete inf-sup constant is zero ({0})")]
    InfSupFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("fixed point did not contract: {0}")]
    NonContraction(String),

    #[error("initial data failed the compatibility check: {0}")]
    IncompatibleData(String),

    #[error("configuration error ({key}): {msg}")]
    Config { key: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the batch front end: 2 for a solver that failed
    /// to contract, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonContraction(_) => 2,
            _ => 1,
        }
    }
}
