use thiserror::Error;

/// Errors raised anywhere in the fitting and inference pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset has an odd number of rows ({0}); every pair needs exactly two")]
    OddRowCount(usize),
    #[error("malformed pairing: {0}")]
    MalformedPairing(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no discordant pairs; the conditional likelihood is empty")]
    NoDiscordantPairs,
    #[error("only {0} concordant pairs; at least 2 are needed to build the prior")]
    InsufficientConcordant(usize),
    #[error("separation detected: estimates diverge")]
    SeparationDetected,
    #[error("design is rank deficient")]
    RankDeficient,
    #[error("sandwich covariance is singular")]
    SingularSandwich,
    #[error("iteration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("covariance is not positive definite after jitter")]
    NonSpdCovariance,
    #[error("state contains non-finite values")]
    NonFiniteState,
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("chain {chain}: {rate:.2} of post-warmup transitions diverged")]
    AllDivergent { chain: usize, rate: f64 },
    #[error("chain {chain} drifted to |beta_w| > 50 during warmup twice")]
    ChainDrift { chain: usize },
    #[error("need at least 2 chains with 4 draws each")]
    InsufficientDraws,
    #[error("no draws")]
    EmptyDraws,
    #[error("need at least {needed} draws, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("study has zero iterations")]
    EmptyStudy,
}

pub type Result<T> = std::result::Result<T, Error>;
