//! Joint association, subchannel and power allocation for multi-hop
//! integrated-access-and-backhaul mmWave networks.

pub mod assoc;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod netmodel;
pub mod oracle;
pub mod power;
pub mod solver;
pub mod subchannel;
pub mod topology;
pub mod units;

pub use channel::{beamform_and_gain, realize_channels, ChannelRealization, GainTable, LinkKind};
pub use error::{
    ChannelError, ConfigError, ExperimentError, NetError, OracleError, SolverError, TopologyError,
};
pub use netmodel::{validate, ConstraintId, ConstraintReport, Instance, Solution};
pub use topology::{deploy, stream_rng, DeploymentMode, Dims, ScenarioConfig, Topology};
