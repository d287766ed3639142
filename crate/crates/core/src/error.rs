use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {what} = {requested} > {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    /// The equation-of-motion system could not be solved even with the
    /// largest allowed regularization.
    #[error("singular EOM system at t = {time}: residual {residual:.3e}, condition estimate {condition:.3e}")]
    SingularSystem {
        time: f64,
        residual: f64,
        condition: f64,
    },

    #[error("norm drift {drift:.3e} exceeds tolerance {tolerance:.3e} at t = {time}")]
    NormDrift {
        time: f64,
        drift: f64,
        tolerance: f64,
    },

    #[error("unitarity drift {drift:.3e} at t = {time}")]
    UnitarityDrift { time: f64, drift: f64 },

    #[error("non-finite variational parameters at t = {time}")]
    NonFinite { time: f64 },

    #[error("time {requested} is not on the propagation grid (nearest grid point {nearest})")]
    OffGrid { requested: f64, nearest: f64 },

    #[error("coherent-state tail mass {tail:.3e} beyond cutoff exceeds tolerance {tolerance:.3e} (mode {mode})")]
    TailMass {
        mode: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("undefined: {0}")]
    Undefined(String),
}

impl Error {
    /// Time at which an engine aborted, if the error carries one.
    pub fn time(&self) -> Option<f64> {
        match self {
            Error::SingularSystem { time, .. }
            | Error::NormDrift { time, .. }
            | Error::UnitarityDrift { time, .. }
            | Error::NonFinite { time } => Some(*time),
            _ => None,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
