//! Fixtures shared by the stage benchmarks.

use iab_core::experiments::build_instance;
use iab_core::experiments::joint::{direct_access_parents, initial_solution};
use iab_core::netmodel::{Instance, Solution};
use iab_core::ScenarioConfig;

/// Case-1 geometry with the given sizes, trial 0 of seed 1, and the
/// direct-access starting point.
pub fn fixture(num_sbs: usize, num_ues: usize, num_subchannels: usize) -> (ScenarioConfig, Instance, Solution) {
    let mut config = ScenarioConfig::default();
    config.num_sbs = num_sbs;
    config.num_ues = num_ues;
    config.num_subchannels = num_subchannels;
    let (_, inst) = build_instance(&config, 1, 0).expect("valid fixture config");
    let start = initial_solution(&inst, &direct_access_parents(&inst.dims));
    (config, inst, start)
}
