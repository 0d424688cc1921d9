use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("tail undefined: {0}")]
    TailUndefined(String),

    #[error("not square integrable: gamma = {gamma} <= 1/2")]
    NotSquareIntegrable { gamma: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("numerical blow-up at t = {t} (|x| = {value})")]
    BlowUp { t: f64, value: f64 },

    #[error("increment width {h} is not a multiple of the step {dt}")]
    IncrementNotMultiple { h: f64, dt: f64 },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("table error: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
