use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("cell radius must be positive, got {0}")]
    ZeroArea(f64),
    #[error("node count mismatch: {0}")]
    CountMismatch(String),
    #[error("node {0} cannot be linked to itself")]
    SelfLink(usize),
    #[error("node {node} out of range (network has {count} nodes)")]
    UnknownNode { node: usize, count: usize },
    #[error("node {0} is not a base station")]
    NotBaseStation(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("distance {0} m is below the 1 m reference distance")]
    BelowReferenceDistance(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("start point violates {0}")]
    InfeasibleStart(String),
    #[error("dimension mismatch: program has {expected} variables, start has {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0:.3e} enumerations")]
    TooLarge(f64),
    #[error("no feasible solution exists on the enumeration grid")]
    NoFeasible,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("trial {seed} scheme {scheme}: infeasible solution ({diagnostics})")]
    Infeasible {
        seed: u64,
        scheme: String,
        diagnostics: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
