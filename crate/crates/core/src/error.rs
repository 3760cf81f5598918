use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature bounds [{lower}, {upper}]: lower must be below upper")]
    Bounds { lower: f64, upper: f64 },
    #[error("invalid privacy budget: {0}")]
    Budget(String),
    #[error("cannot calibrate mechanism: {0}")]
    Calibration(String),
    #[error("dataset is already privatized")]
    Provenance,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported joint dimension p = {0}")]
    UnsupportedDimension(usize),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("logistic loss requires outputs in {{0, 1}}, found {0}")]
    Label(f64),
    #[error("need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("no usable records after ingestion")]
    EmptyData,
    #[error("cannot split {n} records with n_train = {n_train}")]
    Split { n: usize, n_train: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
