//! Seeded Monte-Carlo trials, paired across schemes, and sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{beamform_and_gain, realize_channels};
use crate::error::{ConfigError, ExperimentError};
use crate::experiments::baselines::{run_baseline, Scheme};
use crate::experiments::joint::{JointTraceRow, StageTimes};
use crate::netmodel::{rate_summary, validate, Instance, Solution, DEFAULT_TOL};
use crate::topology::{deploy_with_rng, stream_rng, DeploymentMode, ScenarioConfig, Topology, PURPOSE_CHANNEL, PURPOSE_DEPLOY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub scheme: Scheme,
    pub sum_rate: f64,
    pub ue_rates: Vec<f64>,
    /// LoS fraction of the SBS backhaul links.
    pub backhaul_los: Option<f64>,
    /// LoS fraction of the UE access links.
    pub access_los: Option<f64>,
    pub outer_iters: usize,
    pub trace: Vec<JointTraceRow>,
    pub stage_times: StageTimes,
    pub feasible: bool,
}

/// Node placement and gains of one trial; SBS positions are the fixed ring.
pub fn build_instance(config: &ScenarioConfig, master_seed: u64, trial: u64) -> Result<(Topology, Instance), ExperimentError> {
    let mut rng = stream_rng(master_seed, trial, PURPOSE_DEPLOY);
    let topo = deploy_with_rng(config, DeploymentMode::Random, &mut rng)?;
    let mut rng = stream_rng(master_seed, trial, PURPOSE_CHANNEL);
    let gains = beamform_and_gain(&realize_channels(&topo, config, &mut rng));
    Ok((topo, Instance::new(config, gains)))
}

/// LoS fractions of the SBS backhaul links and of the UE access links;
/// `None` when the network has no such link.
pub fn los_fractions(inst: &Instance, sol: &Solution) -> (Option<f64>, Option<f64>) {
    let d = inst.dims;
    let parents = sol.parents();
    let frac = |nodes: &mut dyn Iterator<Item = usize>| {
        let (mut los, mut n) = (0usize, 0usize);
        for i in nodes {
            if let Some(b) = parents[i] {
                n += 1;
                los += inst.gains.is_los(b, i) as usize;
            }
        }
        (n > 0).then(|| los as f64 / n as f64)
    };
    (frac(&mut d.sbs()), frac(&mut d.ues()))
}

/// Runs every scheme on the same gains. Any infeasible final solution
/// aborts the trial.
pub fn run_trial(config: &ScenarioConfig, master_seed: u64, trial: u64, schemes: &[Scheme]) -> Result<Vec<TrialResult>, ExperimentError> {
    let (_, inst) = build_instance(config, master_seed, trial)?;
    schemes
        .iter()
        .map(|&scheme| {
            let out = run_baseline(&inst, config, scheme);
            let report = validate(&inst, &out.solution, DEFAULT_TOL).expect("dimensions match");
            if !report.feasible {
                return Err(ExperimentError::Infeasible {
                    seed: trial,
                    scheme: scheme.to_string(),
                    diagnostics: report.diagnostics(),
                });
            }
            let rs = rate_summary(&inst, &out.solution);
            let (backhaul_los, access_los) = los_fractions(&inst, &out.solution);
            Ok(TrialResult {
                trial,
                scheme,
                sum_rate: rs.sum_rate,
                ue_rates: inst.dims.ues().map(|i| rs.incoming[i]).collect(),
                backhaul_los,
                access_los,
                outer_iters: out.outer_iters,
                trace: out.trace,
                stage_times: out.stage_times,
                feasible: true,
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct MonteCarloOutcome {
    /// Per trial in seed order, each with one result per scheme.
    pub results: Vec<Vec<TrialResult>>,
    /// Aborted trials and the reason.
    pub aborted: Vec<(u64, String)>,
}

/// Trials `0..trials` in parallel, reduced in trial order.
pub fn monte_carlo(config: &ScenarioConfig, schemes: &[Scheme], trials: u64, master_seed: u64) -> Result<MonteCarloOutcome, ExperimentError> {
    if trials == 0 {
        return Err(ConfigError::Invalid("trials must be at least 1".into()).into());
    }
    config.validate()?;
    let runs: Vec<Result<Vec<TrialResult>, ExperimentError>> =
        (0..trials).into_par_iter().map(|t| run_trial(config, master_seed, t, schemes)).collect();
    let mut results = Vec::new();
    let mut aborted = Vec::new();
    for r in runs {
        match r {
            Ok(v) => results.push(v),
            Err(ExperimentError::Infeasible { seed, scheme, diagnostics }) => {
                aborted.push((seed, format!("{scheme}: {diagnostics}")))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(MonteCarloOutcome { results, aborted })
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregated statistics of one scheme at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub schema_version: u32,
    pub axis: String,
    pub value: f64,
    pub scheme: Scheme,
    pub n: usize,
    pub aborted: usize,
    pub sum_rate_mean: f64,
    pub sum_rate_std: f64,
    pub backhaul_los_mean: f64,
    pub backhaul_los_std: f64,
    pub access_los_mean: f64,
    pub access_los_std: f64,
    pub outer_iters_mean: f64,
}

pub const SCHEMA_VERSION: u32 = 1;

pub fn aggregate(axis: &str, value: f64, schemes: &[Scheme], outcome: &MonteCarloOutcome) -> Vec<AggregateRow> {
    schemes
        .iter()
        .map(|&scheme| {
            let rows: Vec<&TrialResult> = outcome.results.iter().flatten().filter(|r| r.scheme == scheme).collect();
            let col = |f: fn(&TrialResult) -> Option<f64>| rows.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let (sum_rate_mean, sum_rate_std) = mean_std(&col(|r| Some(r.sum_rate)));
            let (backhaul_los_mean, backhaul_los_std) = mean_std(&col(|r| r.backhaul_los));
            let (access_los_mean, access_los_std) = mean_std(&col(|r| r.access_los));
            let (outer_iters_mean, _) = mean_std(&col(|r| Some(r.outer_iters as f64)));
            AggregateRow {
                schema_version: SCHEMA_VERSION,
                axis: axis.to_string(),
                value,
                scheme,
                n: rows.len(),
                aborted: outcome.aborted.len(),
                sum_rate_mean,
                sum_rate_std,
                backhaul_los_mean,
                backhaul_los_std,
                access_los_mean,
                access_los_std,
                outer_iters_mean,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NumUes,
    MinRate,
    NumSbs,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::NumUes => "num_ues",
            SweepAxis::MinRate => "min_rate",
            SweepAxis::NumSbs => "num_sbs",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "num_ues" => Ok(SweepAxis::NumUes),
            "min_rate" => Ok(SweepAxis::MinRate),
            "num_sbs" => Ok(SweepAxis::NumSbs),
            other => Err(ConfigError::Invalid(format!("unknown sweep axis `{other}`"))),
        }
    }

    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, ConfigError> {
        let mut c = config.clone();
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(ConfigError::Invalid(format!("{} needs a whole number, got {value}", self.as_str())))
            }
        };
        match self {
            SweepAxis::NumUes => c.num_ues = count()?,
            SweepAxis::NumSbs => c.num_sbs = count()?,
            SweepAxis::MinRate => c.min_rate_bps = value,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: MonteCarloOutcome,
}

/// One Monte-Carlo run per value, all with the same trial seeds.
pub fn sweep(
    config: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    schemes: &[Scheme],
    trials: u64,
    master_seed: u64,
) -> Result<(Vec<AggregateRow>, Vec<SweepPoint>), ExperimentError> {
    if values.is_empty() {
        return Err(ConfigError::Invalid("sweep needs at least one value".into()).into());
    }
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &value in values {
        let c = axis.apply(config, value)?;
        let outcome = monte_carlo(&c, schemes, trials, master_seed)?;
        rows.extend(aggregate(axis.as_str(), value, schemes, &outcome));
        points.push(SweepPoint { value, outcome });
    }
    Ok((rows, points))
}

/// Stage wall times of the proposed scheme for one network size, with the
/// subchannel problem dimension `B^2 M + (K + 1) B M + K M` alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub num_sbs: usize,
    pub num_ues: usize,
    pub num_subchannels: usize,
    pub association_s: f64,
    pub subchannel_s: f64,
    pub power_s: f64,
    pub outer_iters: usize,
    pub subchannel_dim: usize,
    pub association_terms: usize,
}

pub fn bench_scaling(config: &ScenarioConfig, sizes: &[(usize, usize, usize)], master_seed: u64) -> Result<Vec<ScalingRow>, ExperimentError> {
    sizes
        .iter()
        .map(|&(b, k, m)| {
            let mut c = config.clone();
            c.num_sbs = b;
            c.num_ues = k;
            c.num_subchannels = m;
            c.validate()?;
            let (_, inst) = build_instance(&c, master_seed, 0)?;
            let out = run_baseline(&inst, &c, Scheme::Proposed);
            Ok(ScalingRow {
                num_sbs: b,
                num_ues: k,
                num_subchannels: m,
                association_s: out.stage_times.association,
                subchannel_s: out.stage_times.subchannel,
                power_s: out.stage_times.power,
                outer_iters: out.outer_iters,
                subchannel_dim: b * b * m + (k + 1) * b * m + k * m,
                association_terms: b * k + k,
            })
        })
        .collect()
}
