use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Evaluation point outside the open exterior disk, or at a map singularity.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    /// Continuous-logarithm tracking jumped between consecutive path samples.
    #[error("branch tracking failed at z = {re} + {im}i")]
    Branch { re: f64, im: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    #[error("grid too small: M = {grid} < 4 * m_max = {required}")]
    GridTooSmall { grid: usize, required: usize },

    #[error("mismatched field levels: {0}")]
    MismatchedLevels(String),

    /// An intermediate of a map composition became non-finite or left the
    /// capacity envelope by more than the guard factor.
    #[error("numeric guard tripped: {0}")]
    NumericGuard(String),
}
