use thiserror::Error;

pub type Result<T, E = PpoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("undersampling factors {usf_a} and {usf_b} are not coprime (gcd = {gcd})")]
    NotCoprime {
        usf_a: usize,
        usf_b: usize,
        gcd: usize,
    },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid taper: {0}")]
    Taper(String),

    /// The taper inner product vanished, so the PPO is undefined.
    #[error("normalization constant is zero (tapers share no weighted sensors)")]
    ZeroNormalization,

    #[error("extent mismatch: expected {expected}, got {got}")]
    ExtentMismatch { expected: usize, got: usize },

    #[error("invalid u-grid: {0}")]
    Grid(String),

    #[error("grid too coarse: {points} points, need at least {required}")]
    GridTooCoarse { points: usize, required: usize },

    #[error("invalid signal model: {0}")]
    Signal(String),

    #[error("no null found {side} of the main lobe")]
    NoNullFound { side: &'static str },

    #[error(
        "oracle size guard exceeded: {pairs} index pairs > {limit}; use ppo_covariance instead"
    )]
    OracleTooLarge { pairs: usize, limit: usize },

    #[error("lag support: {0}")]
    LagSupport(String),

    #[error("{check} needs at least {required} trials, got {got}")]
    TooFewTrials {
        check: &'static str,
        required: usize,
        got: usize,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
