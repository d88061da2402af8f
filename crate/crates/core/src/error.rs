use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("question {0} has no annotation")]
    MissingAnnotation(u64),

    #[error("question {} has {found} answers, expected {expected}", .question_id.map_or_else(|| "<answers>".to_string(), |id| id.to_string()))]
    AnswerCountMismatch {
        question_id: Option<u64>,
        expected: usize,
        found: usize,
    },

    #[error("question id {0} appears more than once")]
    DuplicateQuestion(u64),

    #[error("image {image_id}: {reason}")]
    InvalidProbability { image_id: u64, reason: String },

    #[error("agreement threshold m={m} must lie in 1..={answers}")]
    InvalidThreshold { m: usize, answers: usize },

    #[error("question {} has no tokens", .question_id.map_or_else(|| "<text>".to_string(), |id| id.to_string()))]
    EmptyQuestion { question_id: Option<u64> },

    #[error("training set needs at least 2 samples, got {0}")]
    EmptyTrainingSet(usize),

    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("impurity of an empty node is undefined")]
    EmptyNode,

    #[error("unsupported model file: {0}")]
    FormatVersionMismatch(String),

    #[error("no positive (disagreement) items to rank")]
    NoPositives,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("score for item {0} is not finite")]
    NonFiniteScore(usize),

    #[error("no prediction for question {0}")]
    MissingPrediction(u64),

    #[error("budget {budget} outside 0..={questions}")]
    InvalidBudget { budget: usize, questions: usize },

    #[error("answer counts S={min}, R={max} must satisfy 1 <= S < R <= {pool}")]
    InvalidCounts { min: usize, max: usize, pool: usize },

    #[error("question {0} is present on one side only")]
    KeyMismatch(u64),

    #[error("answer pool of {0} exceeds the exact combinatorics limit of 64")]
    Overflow(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// True when the error stems from caller-supplied data or configuration
    /// rather than a broken internal invariant.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::EmptyNode)
    }
}
