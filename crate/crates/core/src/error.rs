use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("inconsistent ledger: {0}")]
    InconsistentLedger(String),

    #[error("flow conservation violated: received {received} bytes but only {forwarded} forwarded")]
    FlowConservation { received: f64, forwarded: f64 },

    #[error("port {port} forwards {bytes} bytes but capacity over {duration}s is {limit}")]
    Infeasible {
        port: usize,
        bytes: f64,
        limit: f64,
        duration: f64,
    },

    #[error("topology construction failed: {0}")]
    Construction(String),

    #[error("mapping failed: {0}")]
    Mapping(String),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("routing failed: no path from GPU {src} to GPU {dst}")]
    Unreachable { src: usize, dst: usize },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
