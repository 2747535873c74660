//! Orchestration of the three stages, reference schemes, Monte-Carlo
//! drivers and result files.

pub mod baselines;
pub mod joint;
pub mod montecarlo;
pub mod output;

pub use baselines::{run_baseline, Scheme};
pub use joint::{run_joint, JointOutcome, JointTraceRow, Stage};
pub use montecarlo::{
    aggregate, bench_scaling, build_instance, monte_carlo, run_trial, sweep, AggregateRow, MonteCarloOutcome,
    SweepAxis, TrialResult, SCHEMA_VERSION,
};
