use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Provider,
}

#[derive(Debug, Error)]
pub enum Error {
    // dataset
    #[error("target column `{0}` not found in CSV header")]
    MissingTarget(String),
    #[error("row {row}: target value `{value}` is not a declared class")]
    UnknownClass { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("row {row}: empty cell in column `{column}`")]
    MissingCell { row: usize, column: String },
    #[error("at least two classes are required, found {0}")]
    TooFewClasses(usize),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("metadata declares column `{0}` that is not in the CSV header")]
    UnknownColumn(String),
    #[error("need at least {min} rows to split, found {found}")]
    TooFewRows { min: usize, found: usize },

    // discretize
    #[error("cannot fit an encoder on an empty column")]
    EmptyColumn,
    #[error("no fitted boundaries for column `{0}`")]
    NotFitted(String),
    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),

    // llm backend
    #[error("prompt needs {needed} tokens but the context limit is {limit}")]
    ContextOverflow { needed: usize, limit: usize },
    #[error("provider error: {0}")]
    Provider(String),
    #[error("cache corrupted at line {line}: {reason}")]
    CacheCorruption { line: usize, reason: String },

    // mock oracle
    #[error("no scripted pattern matches the prompt")]
    NoPatternMatch,

    // textualize
    #[error("no description within {min}..={max} words after {attempts} attempts (row {row})")]
    LengthExhausted { row: usize, attempts: usize, min: usize, max: usize },
    #[error("template placeholder `{0}` has no matching column")]
    MissingPlaceholder(String),

    // sampling
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class `{0}` has no training rows")]
    EmptyClass(String),
    #[error("requested {requested} samples from a population of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    // summary learner
    #[error("summary directive is empty")]
    EmptyDirective,
    #[error("could not map completion {0:?} to a class")]
    MappingFailure(String),
    #[error("the model returned an empty summary")]
    EmptySummary,
    #[error("every candidate failed to produce a parseable prediction")]
    AllCandidatesFailed,

    // boosting
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weighted error {0} is degenerate (must be strictly between 0 and 1)")]
    DegenerateError(f64),
    #[error("round {round}: no acceptable weak learner after {attempts} attempts")]
    RoundResampleExhausted { round: usize, attempts: usize },
    #[error("every round abstained on the query")]
    AllRoundsAbstained,
    #[error("model schema does not match the dataset")]
    SchemaMismatch,

    // baselines
    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Regex(#[from] regex::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Provider(_) | Error::ContextOverflow { .. } | Error::NoPatternMatch | Error::EmptySummary => {
                ErrorClass::Provider
            }
            Error::InvalidArgument(_) | Error::InvalidEncoding(_) | Error::EmptyDirective => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }
}
