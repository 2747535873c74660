//! Reference association schemes. Each fixes some association rows and
//! then runs the same subchannel and power stages as the proposed scheme.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assoc::AssocRestriction;
use crate::error::ConfigError;
use crate::experiments::joint::{direct_access_parents, initial_solution, run_joint, JointOutcome};
use crate::netmodel::Instance;
use crate::topology::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    ShMaxSinr,
    MhMaxSinr,
    ShProp,
    DirectAccess,
}

impl Scheme {
    pub const ALL: [Scheme; 5] =
        [Scheme::Proposed, Scheme::ShMaxSinr, Scheme::MhMaxSinr, Scheme::ShProp, Scheme::DirectAccess];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::ShMaxSinr => "sh_max_sinr",
            Scheme::MhMaxSinr => "mh_max_sinr",
            Scheme::ShProp => "sh_prop",
            Scheme::DirectAccess => "direct_access",
        }
    }

    /// Whether SBS backhaul may use other SBSs as parents.
    pub fn multi_hop(self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::MhMaxSinr)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown scheme `{s}`")))
    }
}

/// Parent of each UE by interference-free SNR at full budget on
/// subchannel 0; ties go to the MBS, then the lowest index.
pub fn max_sinr_parents(inst: &Instance) -> Vec<Option<usize>> {
    let d = inst.dims;
    let mut parents = direct_access_parents(&d);
    for i in d.ues() {
        let mut best = 0;
        for b in d.sbs() {
            if inst.peak_snr(b, i, 0) > inst.peak_snr(best, i, 0) {
                best = b;
            }
        }
        parents[i] = Some(best);
    }
    parents
}

/// Association restriction and starting parents for `scheme`.
pub fn scheme_setup(inst: &Instance, scheme: Scheme) -> (AssocRestriction, Vec<Option<usize>>) {
    let d = inst.dims;
    let direct = direct_access_parents(&d);
    match scheme {
        Scheme::Proposed => (AssocRestriction::none(&d), direct),
        Scheme::ShProp => (AssocRestriction::single_hop(&d), direct),
        Scheme::DirectAccess => (AssocRestriction { fixed: direct.clone() }, direct),
        Scheme::ShMaxSinr => {
            let p = max_sinr_parents(inst);
            (AssocRestriction { fixed: p.clone() }, p)
        }
        Scheme::MhMaxSinr => {
            let p = max_sinr_parents(inst);
            let mut r = AssocRestriction::none(&d);
            d.ues().for_each(|i| r.fixed[i] = p[i]);
            (r, p)
        }
    }
}

pub fn run_baseline(inst: &Instance, config: &ScenarioConfig, scheme: Scheme) -> JointOutcome {
    let (restriction, parents) = scheme_setup(inst, scheme);
    run_joint(inst, config, &restriction, initial_solution(inst, &parents))
}
