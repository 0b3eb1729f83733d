use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} outside evaluable range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("unsupported spline order {0} (supported: 2..={max})", max = crate::bspline::MAX_ORDER)]
    UnsupportedOrder(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-monotone timestamps: {prev} followed by {next}")]
    NonMonotoneTime { prev: f64, next: f64 },

    #[error("non-finite residual while perturbing parameter block {block}")]
    NonFiniteResidual { block: usize },

    #[error("pose graph is disconnected; components: {components:?}")]
    DisconnectedGraph { components: Vec<Vec<u64>> },

    #[error("unknown key-scan id {0}")]
    UnknownKeyScan(u64),

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("invalid value for `{key}`: {value}")]
    InvalidConfigValue { key: String, value: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("scan {scan_id}: {msg}")]
    CorruptScan { scan_id: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
