use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bit count {bits} is not a multiple of {per_symbol} bits per symbol")]
    BitLength { bits: usize, per_symbol: usize },
    #[error("unsupported modulation order {0}")]
    ModulationOrder(usize),
    #[error("noise variance must be positive, got {0}")]
    NoiseVariance(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("channel matrix is rank deficient")]
    SingularChannel,
    #[error("exhaustive search over {0} candidates exceeds the enumeration guard")]
    EnumerationGuard(u128),
    #[error("path plan was built for a different channel")]
    PlanMismatch,
    #[error("unknown detector '{0}'")]
    UnknownDetector(String),
    #[error("cluster delay {delay_s:e} s exceeds the {guard_s:e} s guard interval")]
    DelayExceedsGuard { delay_s: f64, guard_s: f64 },
    #[error("invalid cluster profile: {0}")]
    Profile(String),
    #[error("invalid MCS index {0}")]
    McsIndex(usize),
    #[error("LDPC: {0}")]
    Ldpc(String),
    #[error("rate matching: {0}")]
    RateMatch(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{streams} streams exceed the {capacity}-entry pilot book")]
    PilotBook { streams: usize, capacity: usize },
    #[error("missing channel fixtures for N={streams}, M={antennas}")]
    MissingFixtures { streams: usize, antennas: usize },
    #[error("use case needs {needed} RBs per vehicle but only {available} exist")]
    Unsupportable { needed: u64, available: u64 },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
