use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter outside the model: {0}")]
    ParameterOutsideModel(String),
    #[error("non-finite conditional density at t = {t}")]
    NonFiniteDensity { t: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid assumption constants: {0}")]
    InvalidConstants(String),
    #[error("zero parameter distance with non-zero log-ratio {log_ratio}")]
    ZeroDistance { log_ratio: f64 },
    #[error("penalty regime mismatch: expected {expected:?}")]
    RegimeMismatch { expected: crate::model::Regime },
    #[error("invalid penalty spec: {0}")]
    InvalidPenaltySpec(String),
    #[error("no bisection bracket: {0}")]
    NoBracket(String),
    #[error("empty model list")]
    EmptyModelList,
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("oracle densities unavailable")]
    OracleUnavailable,
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("invalid lambda {0}, must lie in (0, 1/2]")]
    InvalidLambda(f64),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("no feasible initialization: {0}")]
    NoFeasibleInit(String),
    #[error("insufficient history at t = {t}: need lag {lag}")]
    InsufficientHistory { t: usize, lag: usize },
    #[error("conditional rate {rate} outside [{lo}, {hi}]")]
    RateOutOfRange { rate: f64, lo: f64, hi: f64 },
    #[error("inconsistent history: {0}")]
    InconsistentHistory(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
