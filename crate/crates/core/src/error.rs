use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid bandwidth {0}: must be finite and positive")]
    InvalidBandwidth(f64),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("ragged panel: curve {curve} has {got} rows, expected {expected}")]
    RaggedPanel {
        curve: String,
        got: usize,
        expected: usize,
    },

    #[error("value outside [0,1]: {0}")]
    Domain(String),

    #[error("covariate z varies within curve {0}")]
    InconsistentZ(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("singular local system (condition {condition:.3e}, mass {mass:.3e})")]
    SingularSystem { condition: f64, mass: f64 },

    #[error("rank deficient design: rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("degenerate functionals: {0}")]
    DegenerateFunctionals(String),

    #[error("invalid quadrature grid: {0}")]
    Quadrature(String),

    #[error("every GCV candidate failed on more than 10% of the data points")]
    AllSingular,

    #[error("evaluation point ({0}, {1}) outside [0,1]^2")]
    EvaluationOutsideDomain(f64, f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FdaError>;

impl FdaError {
    /// Stable machine-readable name used in CLI error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            FdaError::DimensionMismatch(_) => "DimensionMismatch",
            FdaError::InvalidBandwidth(_) => "InvalidBandwidth",
            FdaError::Parse { .. } => "ParseError",
            FdaError::RaggedPanel { .. } => "RaggedPanel",
            FdaError::Domain(_) => "DomainError",
            FdaError::InconsistentZ(_) => "InconsistentZ",
            FdaError::InvalidPanel(_) => "InvalidPanel",
            FdaError::SingularSystem { .. } => "SingularSystem",
            FdaError::RankDeficient { .. } => "RankDeficient",
            FdaError::DegenerateSample(_) => "DegenerateSample",
            FdaError::DegenerateFunctionals(_) => "DegenerateFunctionals",
            FdaError::Quadrature(_) => "QuadratureError",
            FdaError::AllSingular => "AllSingular",
            FdaError::EvaluationOutsideDomain(..) => "EvaluationOutsideDomain",
            FdaError::Config(_) => "ConfigError",
            FdaError::Io(_) => "IoError",
        }
    }

    /// CLI exit code: 2 input, 3 numeric degeneracy, 4 config.
    pub fn exit_code(&self) -> i32 {
        match self {
            FdaError::Parse { .. }
            | FdaError::RaggedPanel { .. }
            | FdaError::Domain(_)
            | FdaError::InconsistentZ(_)
            | FdaError::InvalidPanel(_)
            | FdaError::EvaluationOutsideDomain(..)
            | FdaError::DimensionMismatch(_)
            | FdaError::Io(_) => 2,
            FdaError::SingularSystem { .. }
            | FdaError::RankDeficient { .. }
            | FdaError::DegenerateSample(_)
            | FdaError::DegenerateFunctionals(_)
            | FdaError::AllSingular => 3,
            FdaError::InvalidBandwidth(_) | FdaError::Quadrature(_) | FdaError::Config(_) => 4,
        }
    }
}
