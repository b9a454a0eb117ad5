use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    // ---- data ingestion ----
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("non-numeric feature at row {row}, column {col}: {value:?}")]
    NonNumericFeature { row: usize, col: usize, value: String },
    #[error("all rows carry a single label value {0:?}; two classes are required")]
    SingleClassData(String),
    #[error("found {0} distinct label values; exactly two are required")]
    MultiClassData(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class {label} has {count} samples; {needed} folds need at least {needed} per class")]
    TooFewSamplesPerClass { label: i8, count: usize, needed: usize },

    // ---- weights ----
    #[error("quantifier argument out of domain: {0}")]
    DomainError(String),
    #[error("raw weight vector is all zeros and cannot be normalized")]
    AllZeroWeights,
    #[error("length mismatch: weights have {weights}, deviations have {deviations}")]
    LengthMismatch { weights: usize, deviations: usize },
    #[error("{trainer} requires non-decreasing weights; use the mixed-integer trainer instead")]
    NonMonotoneWeights { trainer: &'static str },

    // ---- qp ----
    #[error("quadratic term is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("solver reached the iteration limit ({0} iterations) without a certificate")]
    MaxIterations(usize),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    // ---- trainers ----
    #[error("model has no support vectors and no bias interval; {0}")]
    EmptyModel(String),
    #[error("bias is undetermined: {0}")]
    BiasUndetermined(String),
    #[error("instance too large for this trainer: n = {n}, limit = {limit} ({hint})")]
    TooLarge { n: usize, limit: usize, hint: &'static str },
    #[error("brute-force oracle only enumerates up to n = 8, got n = {0}")]
    TooLargeForBruteForce(usize),
    #[error("node limit {limit} reached; incumbent objective {incumbent:.6e}, gap {gap:.3e}")]
    NodeLimitReached { limit: usize, incumbent: f64, gap: f64 },
    #[error("time limit {limit_secs} s reached; incumbent objective {incumbent:.6e}, gap {gap:.3e}")]
    TimeLimitReached { limit_secs: f64, incumbent: f64, gap: f64 },
    #[error("auxiliary bounding problem infeasible; the supplied upper bound {0:.6e} is not valid")]
    AuxiliaryInfeasible(f64),

    // ---- eval ----
    #[error("no samples to evaluate")]
    EmptyEvaluation,
    #[error("one class is absent from the evaluation set; balanced accuracy is undefined")]
    OneClassAbsent,
    #[error("rank vector is not a permutation of 0..{0}")]
    NotAPermutation(usize),
    #[error("every configuration in the grid failed: {0}")]
    AllConfigsFailed(String),

    // ---- cli / io ----
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
