use serde::{Deserialize, Serialize};
use serde_json::Value;

use bclr_core::Error;

pub const EXIT_FIT_FAILURE: i32 = 1;
pub const EXIT_MALFORMED: i32 = 2;
pub const EXIT_INSUFFICIENT_CONCORDANT: i32 = 3;
pub const EXIT_NO_DISCORDANT: i32 = 4;
pub const EXIT_SAMPLER: i32 = 5;

/// Machine-readable failure written to stderr as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliError {
    pub code: String,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(code: &str, exit_code: i32, message: impl Into<String>) -> Self {
        Self { code: code.into(), exit_code, message: message.into(), hint: None, details: None }
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new("MalformedInput", EXIT_MALFORMED, message)
    }

    pub fn invalid_arguments(message: impl Into<String>) -> Self {
        Self::new("InvalidArguments", EXIT_MALFORMED, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("IoError", EXIT_MALFORMED, message)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::OddRowCount(_)
            | Error::MalformedPairing(_)
            | Error::InvalidInput(_)
            | Error::DimensionMismatch { .. } => Self::malformed(message),
            Error::InvalidConfig(_) | Error::InvalidPrior(_) | Error::EmptyStudy => Self::invalid_arguments(message),
            Error::InsufficientConcordant(_) => Self {
                hint: Some("use --method clr".into()),
                ..Self::new("InsufficientConcordant", EXIT_INSUFFICIENT_CONCORDANT, message)
            },
            Error::NoDiscordantPairs => Self::new("NoDiscordantPairs", EXIT_NO_DISCORDANT, message),
            Error::AllDivergent { chain, rate } => Self {
                details: Some(serde_json::json!({ "chain": chain, "divergence_rate": rate })),
                ..Self::new("SamplerFailure", EXIT_SAMPLER, message)
            },
            Error::ChainDrift { chain } => Self {
                details: Some(serde_json::json!({ "chain": chain })),
                ..Self::new("SamplerFailure", EXIT_SAMPLER, message)
            },
            Error::NonFiniteState => Self::new("SamplerFailure", EXIT_SAMPLER, message),
            Error::SeparationDetected => Self::new("SeparationDetected", EXIT_FIT_FAILURE, message),
            Error::RankDeficient => Self::new("RankDeficient", EXIT_FIT_FAILURE, message),
            Error::SingularSandwich => Self::new("SingularSandwich", EXIT_FIT_FAILURE, message),
            Error::NotConverged(_) => Self::new("NotConverged", EXIT_FIT_FAILURE, message),
            Error::NonSpdCovariance => Self::new("NonSpdCovariance", EXIT_FIT_FAILURE, message),
            Error::InsufficientDraws | Error::EmptyDraws | Error::TooFewDraws { .. } => {
                Self::new("InsufficientDraws", EXIT_FIT_FAILURE, message)
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
