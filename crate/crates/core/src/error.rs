use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid phase-noise configuration: {0}")]
    PnConfig(String),

    #[error("unsupported constellation order {0} (square MQAM with M = 4^k required)")]
    UnsupportedOrder(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("pool construction failed: {0}")]
    PoolConstruction(String),

    #[error("infeasible mapping: {0}")]
    InfeasibleMapping(String),

    #[error("invalid bit frame: {0}")]
    InvalidBits(String),

    #[error("invalid channel configuration: {0}")]
    ChannelConfig(String),

    #[error("singular channel realization (condition number {0:.3e})")]
    SingularChannel(f64),

    #[error("too many singular channel realizations ({0} consecutive rejections)")]
    ChannelRejectionLimit(usize),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("invalid simulation configuration: {0}")]
    SimConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
