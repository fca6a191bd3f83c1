use thiserror::Error;

/// Structural conditions checked by model validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Condition {
    /// Dimensions and field shapes agree.
    Structure,
    /// No killing: q(x, 0) = 0.
    C2,
    /// Positive continuous transition density (assumed for the supported class).
    C3,
    /// Periodic coefficients.
    C4,
    /// Uniformly bounded second jump moment.
    C5,
    /// Vanishing large-jump first moment.
    C6,
    /// Diffusion matrix symmetric positive semidefinite.
    DiffusionPsd,
    /// Jump intensities nonnegative.
    IntensityNonnegative,
    /// Jump size laws are probability measures.
    SizeLaw,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Condition::Structure => "structure",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
            Condition::C4 => "C4",
            Condition::C5 => "C5",
            Condition::C6 => "C6",
            Condition::DiffusionPsd => "diffusion PSD",
            Condition::IntensityNonnegative => "intensity nonnegative",
            Condition::SizeLaw => "size law",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, field has {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{condition} violated: {detail}")]
    Validation { condition: Condition, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("intensity majorant violated: rate {rate} exceeds bound {bound}")]
    MajorantViolated { rate: f64, bound: f64 },

    #[error("diffusion matrix not positive semidefinite (min eigenvalue {0})")]
    NotPsd(f64),

    #[error("generator unsupported: {0}")]
    Unsupported(String),

    #[error("rate matrix is reducible")]
    Reducible,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("grid does not match model: {0}")]
    GridMismatch(String),

    #[error("degenerate covariance: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
