use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid too large: n_steps = {0} exceeds the 10_000 cap for dense tables")]
    GridTooLarge(usize),

    #[error("bracket [{0}, {1}] contains no sign change of f(x) - x")]
    NoSignChange(f64, f64),

    #[error("kernel does not integrate to 1 on [0, inf): got {0}")]
    KernelNotNormalized(f64),

    #[error("Neumann truncation needs order {needed} > cap {cap}; achievable tail bound {bound:e}")]
    TruncationCap { needed: usize, cap: usize, bound: f64 },

    #[error("dominating rate overflow during thinning: {0}")]
    DominatingRate(String),

    #[error("Euler step too coarse: truncation rate {rate:.4}% exceeds 1%")]
    EulerTooCoarse { rate: f64 },

    #[error("negative intensity in limit input at t = {0}")]
    NegativeIntensity(f64),

    #[error("sample too small: need at least {need}, got {got}")]
    SampleTooSmall { need: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown regime `{0}`")]
    UnknownRegime(String),

    #[error("multi-class spec invalid: {0}")]
    InvalidMultiClass(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
