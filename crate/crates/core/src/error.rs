use thiserror::Error;

/// Errors produced by estimation, inference, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("treatment label {label} out of range 0..={max}")]
    TreatmentOutOfRange { label: usize, max: usize },

    #[error("stratum label {label} out of range 1..={max}")]
    StratumOutOfRange { label: usize, max: usize },

    #[error("dataset must contain at least one observation")]
    EmptyDataset,

    #[error("invalid target proportions: {0}")]
    InvalidProportions(String),

    #[error("dataset fails estimation preconditions: {0}")]
    InvalidDataset(String),

    #[error("empty cell (a={treatment}, s={stratum}); cell means are undefined")]
    EmptyCell { treatment: usize, stratum: usize },

    #[error("empty treatment group a={0}")]
    EmptyGroup(usize),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("studentizer matrix is numerically singular (condition number {cond:.3e})")]
    SingularStudentizer { cond: f64 },

    #[error("hypothesis matrix is rank deficient (rank {rank} < {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model specification: {0}")]
    InvalidModelSpec(String),

    #[error("covariate value {value} outside model support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("population mean cache required for model {model} but not provided")]
    MissingMeanCache { model: u8 },

    #[error("block counts exceed stratum size in stratum {stratum}")]
    BlockOverflow { stratum: usize },

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("invalid local power problem: {0}")]
    InvalidPowerProblem(String),

    #[error("method not permitted: {0}")]
    MethodMismatch(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("replication {replication} still has an empty cell after {retries} retries")]
    RetriesExhausted { replication: u64, retries: u32 },

    #[error("rejection tables have mismatched grids: {0}")]
    GridMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
