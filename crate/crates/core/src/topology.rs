//! Scenario configuration, node deployment and node-index bookkeeping.
//!
//! Nodes share one index space: `0` is the macro base station (MBS),
//! `1..=B` are the small base stations (SBSs, the IAB nodes) and
//! `B+1..=B+K` are the user equipments. Base stations are `0..=B`, the
//! receiving nodes are `1..=B+K`.

use std::f64::consts::PI;
use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TopologyError};

/// Every tunable of a scenario. Defaults reproduce the reference system
/// parameters (4 SBSs, 30 UEs, 50 subchannels at 28 GHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_sbs: usize,
    pub num_ues: usize,
    pub num_subchannels: usize,
    pub antennas_mbs: usize,
    pub antennas_sbs: usize,
    pub antennas_ue: usize,
    pub nlos_paths: usize,
    pub max_power_mbs_dbm: f64,
    pub max_power_sbs_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_hz: f64,
    pub carrier_freq_hz: f64,
    pub cell_radius_m: f64,
    /// SBS ring radius as a fraction of the cell radius.
    pub sbs_ring_fraction: f64,
    /// Minimum distance between a UE and any base station.
    pub min_separation_m: f64,
    pub pathloss_exp_los: f64,
    pub pathloss_exp_nlos: f64,
    pub shadowing_std_los_db: f64,
    pub shadowing_std_nlos_db: f64,
    /// Per-UE QoS floor in bit/s.
    pub min_rate_bps: f64,
    /// Binary-relaxation penalty in bit/s. `None` derives it from the
    /// strongest link of the instance.
    pub penalty_factor: Option<f64>,
    /// Dual step size `a / (b + t)`.
    pub step_a: f64,
    pub step_b: f64,
    pub max_outer_iters: usize,
    pub max_assoc_iters: usize,
    pub max_sa_iters: usize,
    pub max_pa_iters: usize,
    pub max_inner_iters: usize,
    pub kkt_tol: f64,
    pub conv_tol: f64,
    pub rng_seed: u64,
    /// Independent LoS draws per backhaul link; the link is LoS if any is.
    pub site_candidates: usize,
    /// Weight of the fair-share point in the subchannel-stage start,
    /// in `[0, 1)`; 0 starts from the incumbent allocation.
    pub sa_start_blend: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_sbs: 4,
            num_ues: 30,
            num_subchannels: 50,
            antennas_mbs: 64,
            antennas_sbs: 16,
            antennas_ue: 2,
            nlos_paths: 6,
            max_power_mbs_dbm: 46.0,
            max_power_sbs_dbm: 30.0,
            bandwidth_hz: 2e6,
            noise_density_dbm_hz: -174.0,
            carrier_freq_hz: 28e9,
            cell_radius_m: 350.0,
            sbs_ring_fraction: 0.6,
            min_separation_m: 1.0,
            pathloss_exp_los: 2.1,
            pathloss_exp_nlos: 3.17,
            shadowing_std_los_db: 3.76,
            shadowing_std_nlos_db: 8.09,
            min_rate_bps: 2e6,
            penalty_factor: None,
            step_a: 1.0,
            step_b: 10.0,
            max_outer_iters: 10,
            max_assoc_iters: 100,
            max_sa_iters: 20,
            max_pa_iters: 20,
            max_inner_iters: 500,
            kkt_tol: 1e-6,
            conv_tol: 1e-4,
            rng_seed: 1,
            site_candidates: 3,
            sa_start_blend: 0.5,
        }
    }
}

impl ScenarioConfig {
    /// Reference parameters with the SBS count of deployment case 1 (B=4)
    /// or case 2 (B=8).
    pub fn case(case: u8) -> Result<Self, ConfigError> {
        Self::default().with_case(case)
    }

    pub fn with_case(mut self, case: u8) -> Result<Self, ConfigError> {
        self.num_sbs = match case {
            1 => 4,
            2 => 8,
            other => return Err(ConfigError::Invalid(format!("unknown case {other}"))),
        };
        Ok(self)
    }

    /// Smaller instance sizes that keep Monte-Carlo runs at desk scale.
    pub fn desk_scale(mut self) -> Self {
        self.num_ues = 10;
        self.num_subchannels = 16;
        self
    }

    pub fn paper_scale(mut self) -> Self {
        self.num_ues = 30;
        self.num_subchannels = 50;
        self
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.num_sbs, self.num_ues, self.num_subchannels)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.num_sbs == 0 || self.num_ues == 0 || self.num_subchannels == 0 {
            return bad("num_sbs, num_ues and num_subchannels must be at least 1");
        }
        if self.antennas_mbs == 0 || self.antennas_sbs == 0 || self.antennas_ue == 0 {
            return bad("antenna counts must be at least 1");
        }
        if self.nlos_paths == 0 {
            return bad("nlos_paths must be at least 1");
        }
        if !(self.pathloss_exp_los > 0.0 && self.pathloss_exp_nlos > self.pathloss_exp_los) {
            return bad("path-loss exponents must satisfy 0 < los < nlos");
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_freq_hz > 0.0) {
            return bad("bandwidth and carrier frequency must be positive");
        }
        if !(self.cell_radius_m > 0.0) {
            return bad("cell radius must be positive");
        }
        if !(self.sbs_ring_fraction > 0.0 && self.sbs_ring_fraction < 1.0) {
            return bad("sbs_ring_fraction must lie in (0, 1)");
        }
        if self.shadowing_std_los_db < 0.0 || self.shadowing_std_nlos_db < 0.0 {
            return bad("shadowing deviations must be non-negative");
        }
        if self.min_rate_bps < 0.0 {
            return bad("min_rate_bps must be non-negative");
        }
        if let Some(mu) = self.penalty_factor {
            if !(mu > 0.0) {
                return bad("penalty_factor must be positive");
            }
        }
        if !(self.step_a > 0.0) || self.step_b < 0.0 {
            return bad("step size needs a > 0 and b >= 0");
        }
        if !(self.kkt_tol > 0.0) || !(self.conv_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_outer_iters == 0
            || self.max_assoc_iters == 0
            || self.max_sa_iters == 0
            || self.max_pa_iters == 0
            || self.max_inner_iters == 0
        {
            return bad("iteration limits must be at least 1");
        }
        if !(0.0..1.0).contains(&self.sa_start_blend) {
            return bad("sa_start_blend must lie in [0, 1)");
        }
        if self.site_candidates == 0 {
            return bad("site_candidates must be at least 1");
        }
        Ok(())
    }

    /// Loads a TOML or JSON file (chosen by extension, TOML otherwise).
    /// Missing keys keep their defaults.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            _ => toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Network dimensions and the index-set helpers built on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub num_sbs: usize,
    pub num_ues: usize,
    pub num_subchannels: usize,
}

impl Dims {
    pub fn new(num_sbs: usize, num_ues: usize, num_subchannels: usize) -> Self {
        Self {
            num_sbs,
            num_ues,
            num_subchannels,
        }
    }

    /// |B0|: MBS plus SBSs.
    pub fn num_bs(&self) -> usize {
        self.num_sbs + 1
    }

    /// Total node count including the MBS.
    pub fn num_nodes(&self) -> usize {
        1 + self.num_sbs + self.num_ues
    }

    pub fn bs(&self) -> RangeInclusive<usize> {
        0..=self.num_sbs
    }

    pub fn sbs(&self) -> RangeInclusive<usize> {
        1..=self.num_sbs
    }

    pub fn ues(&self) -> RangeInclusive<usize> {
        self.num_sbs + 1..=self.num_sbs + self.num_ues
    }

    /// The receiving nodes, SBSs followed by UEs.
    pub fn receivers(&self) -> RangeInclusive<usize> {
        1..=self.num_sbs + self.num_ues
    }

    pub fn is_bs(&self, node: usize) -> bool {
        node <= self.num_sbs
    }

    pub fn is_sbs(&self, node: usize) -> bool {
        node >= 1 && node <= self.num_sbs
    }

    pub fn is_ue(&self, node: usize) -> bool {
        node > self.num_sbs && node < self.num_nodes()
    }

    /// Flat index of the (b, i) pair in a `num_bs x num_nodes` matrix.
    #[inline]
    pub fn pair(&self, b: usize, i: usize) -> usize {
        b * self.num_nodes() + i
    }

    /// Flat index of (b, i, m) in a `num_bs x num_nodes x M` tensor.
    #[inline]
    pub fn link(&self, b: usize, i: usize, m: usize) -> usize {
        (b * self.num_nodes() + i) * self.num_subchannels + m
    }

    /// Flat index of (b, m) in a `num_bs x M` matrix.
    #[inline]
    pub fn bs_sub(&self, b: usize, m: usize) -> usize {
        b * self.num_subchannels + m
    }

    pub fn pair_len(&self) -> usize {
        self.num_bs() * self.num_nodes()
    }

    pub fn link_len(&self) -> usize {
        self.pair_len() * self.num_subchannels
    }

    pub fn power_len(&self) -> usize {
        self.num_bs() * self.num_subchannels
    }
}

/// How nodes are placed in the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentMode {
    /// SBS ring plus a deterministic sunflower layout of UEs.
    Fixed,
    /// SBS ring plus UEs drawn uniformly in the disk.
    Random,
}

/// Node positions in metres, indexed by node id (MBS at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub dims: Dims,
    pub positions: Vec<[f64; 2]>,
    pub cell_radius_m: f64,
}

impl Topology {
    pub fn mbs_position(&self) -> [f64; 2] {
        self.positions[0]
    }

    pub fn sbs_positions(&self) -> &[[f64; 2]] {
        &self.positions[1..=self.dims.num_sbs]
    }

    pub fn ue_positions(&self) -> &[[f64; 2]] {
        &self.positions[self.dims.num_sbs + 1..]
    }

    /// Euclidean distance between base station `b` and node `i`.
    pub fn distance(&self, b: usize, i: usize) -> Result<f64, TopologyError> {
        let count = self.positions.len();
        for node in [b, i] {
            if node >= count {
                return Err(TopologyError::UnknownNode { node, count });
            }
        }
        if !self.dims.is_bs(b) {
            return Err(TopologyError::NotBaseStation(b));
        }
        if b == i {
            return Err(TopologyError::SelfLink(b));
        }
        Ok(euclid(self.positions[b], self.positions[i]))
    }
}

fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Deterministic RNG for one (trial, purpose) pair under a master seed.
///
/// The master seed keys a ChaCha8 generator; the stream id is
/// `trial << 8 | purpose`, so trials and purposes never share a stream.
pub fn stream_rng(master_seed: u64, trial: u64, purpose: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}

pub const PURPOSE_DEPLOY: u8 = 1;
pub const PURPOSE_CHANNEL: u8 = 2;

/// Places the nodes for `config`. `Random` mode draws UEs from the stream
/// derived from `config.rng_seed`.
pub fn deploy(config: &ScenarioConfig, mode: DeploymentMode) -> Result<Topology, TopologyError> {
    let mut rng = stream_rng(config.rng_seed, 0, PURPOSE_DEPLOY);
    deploy_with_rng(config, mode, &mut rng)
}

pub fn deploy_with_rng<R: Rng>(
    config: &ScenarioConfig,
    mode: DeploymentMode,
    rng: &mut R,
) -> Result<Topology, TopologyError> {
    if !(config.cell_radius_m > 0.0) {
        return Err(TopologyError::ZeroArea(config.cell_radius_m));
    }
    if config.num_sbs == 0 || config.num_ues == 0 {
        return Err(TopologyError::CountMismatch(format!(
            "need at least one SBS and one UE, got B={} K={}",
            config.num_sbs, config.num_ues
        )));
    }
    let dims = config.dims();
    let radius = config.cell_radius_m;
    let mut positions = Vec::with_capacity(dims.num_nodes());
    positions.push([0.0, 0.0]);

    let ring = radius * config.sbs_ring_fraction;
    for k in 0..config.num_sbs {
        let theta = 2.0 * PI * k as f64 / config.num_sbs as f64;
        positions.push([ring * theta.cos(), ring * theta.sin()]);
    }
    let num_bs = positions.len();
    let clear = |p: [f64; 2], bs: &[[f64; 2]]| {
        bs.iter().all(|q| euclid(p, *q) >= config.min_separation_m)
    };

    match mode {
        DeploymentMode::Random => {
            for _ in 0..config.num_ues {
                let p = loop {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let theta = 2.0 * PI * rng.gen::<f64>();
                    let p = [r * theta.cos(), r * theta.sin()];
                    if r < radius && clear(p, &positions[..num_bs]) {
                        break p;
                    }
                };
                positions.push(p);
            }
        }
        DeploymentMode::Fixed => {
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..config.num_ues {
                let r = radius * ((k as f64 + 0.5) / config.num_ues as f64).sqrt();
                let mut theta = k as f64 * golden;
                let mut p = [r * theta.cos(), r * theta.sin()];
                while !clear(p, &positions[..num_bs]) {
                    theta += 0.01;
                    p = [r * theta.cos(), r * theta.sin()];
                }
                positions.push(p);
            }
        }
    }

    if positions.len() != dims.num_nodes() {
        return Err(TopologyError::CountMismatch(format!(
            "placed {} nodes, expected {}",
            positions.len(),
            dims.num_nodes()
        )));
    }
    Ok(Topology {
        dims,
        positions,
        cell_radius_m: radius,
    })
}
