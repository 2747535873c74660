//! Association: projected subgradient descent on the dual of the
//! association problem with subchannels and powers held fixed, followed
//! by repairs that guarantee a connected tree rooted at the MBS.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::netmodel::{find_cycles, prospective_power, ActiveSet, Instance, Solution};
use crate::topology::{Dims, ScenarioConfig};

/// Multipliers for the QoS (per UE), backhaul (per SBS) and MBS-attachment
/// constraints. Entries are indexed by node; unused entries stay zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: f64,
    pub t: usize,
}

impl DualState {
    /// All multipliers start at one.
    pub fn new(dims: &Dims) -> Self {
        let mut lambda = vec![0.0; dims.num_nodes()];
        let mut mu = vec![0.0; dims.num_nodes()];
        dims.ues().for_each(|i| lambda[i] = 1.0);
        dims.sbs().for_each(|b| mu[b] = 1.0);
        Self { lambda, mu, nu: 1.0, t: 0 }
    }

    pub fn zeros(dims: &Dims) -> Self {
        Self { lambda: vec![0.0; dims.num_nodes()], mu: vec![0.0; dims.num_nodes()], nu: 0.0, t: 0 }
    }

    /// Euclidean distance between two states.
    pub fn distance(&self, other: &DualState) -> f64 {
        let sq: f64 = self.lambda.iter().zip(&other.lambda).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + self.mu.iter().zip(&other.mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + (self.nu - other.nu).powi(2);
        sq.sqrt()
    }
}

/// `sum_m x R` per pair (b, i), in bps, indexed by `dims.pair`.
pub fn effective_rates(inst: &Instance, x: &[f64], p: &[f64]) -> Vec<f64> {
    let d = inst.dims;
    let active = ActiveSet::new(&d, x, p);
    let mut out = vec![0.0; d.pair_len()];
    for b in d.bs() {
        for i in d.receivers() {
            if i == b {
                continue;
            }
            out[d.pair(b, i)] = (0..d.num_subchannels)
                .filter(|&m| x[d.link(b, i, m)] > 0.0)
                .map(|m| {
                    let s = inst.gains.direct(b, i, m) * p[d.bs_sub(b, m)];
                    let r = inst.bandwidth_hz * (1.0 + s / (active.interference(&inst.gains, b, i, m) + inst.noise_w)).log2();
                    x[d.link(b, i, m)] * r
                })
                .sum();
        }
    }
    out
}

/// Rates used for association: the effective rate for the current parent
/// and, for any other BS, the rate on its best `n` subchannels under the
/// current interference, where `n` is the larger of the node's current
/// count (at least one) and an even split of the BS's idle subchannels.
pub fn candidate_rates(inst: &Instance, sol: &Solution) -> Vec<f64> {
    let d = inst.dims;
    let mut out = effective_rates(inst, &sol.x, &sol.p);
    let p = prospective_power(inst, &sol.p);
    let active = ActiveSet::new(&d, &sol.x, &sol.p);
    let parents = sol.parents();
    // Subchannels a BS neither transmits nor receives on, and its children.
    let idle: Vec<usize> = d
        .bs()
        .map(|b| {
            (0..d.num_subchannels)
                .filter(|&m| !d.receivers().any(|j| j != b && (sol.x(b, j, m) > 0.5 || (d.is_bs(j) && sol.x(j, b, m) > 0.5))))
                .count()
        })
        .collect();
    let children: Vec<usize> = d.bs().map(|b| d.receivers().filter(|&j| parents[j] == Some(b)).count()).collect();
    for i in d.receivers() {
        let parent = parents[i];
        let held = parent.map_or(0, |b| sol.subchannels(b, i).len()).max(1);
        for b in d.bs() {
            if b == i || (Some(b) == parent && out[d.pair(b, i)] > 0.0) {
                continue;
            }
            let count = held.max(idle[b] / (children[b] + 1));
            let mut rates: Vec<f64> = (0..d.num_subchannels)
                .map(|m| {
                    let s = inst.gains.direct(b, i, m) * p[d.bs_sub(b, m)];
                    inst.bandwidth_hz * (1.0 + s / (active.interference(&inst.gains, b, i, m) + inst.noise_w)).log2()
                })
                .collect();
            rates.sort_by(|a, c| c.total_cmp(a));
            out[d.pair(b, i)] = rates.iter().take(count).sum();
        }
    }
    out
}

/// Lagrangian coefficient of `y_{b,i}`.
pub fn score(dims: &Dims, rates: &[f64], duals: &DualState, b: usize, i: usize) -> f64 {
    assert!(b != i, "score of a self pair");
    let r = rates[dims.pair(b, i)];
    match (b == 0, dims.is_ue(i)) {
        (true, true) => (1.0 + duals.lambda[i]) * r,
        (false, true) => (1.0 + duals.lambda[i] - duals.mu[b]) * r,
        (true, false) => duals.mu[i] * r + duals.nu,
        (false, false) => (duals.mu[i] - duals.mu[b]) * r,
    }
}

/// Score matrix indexed by `dims.pair`; self pairs and the MBS column are
/// negative infinity.
pub fn score_matrix(dims: &Dims, rates: &[f64], duals: &DualState) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; dims.pair_len()];
    for b in dims.bs() {
        for i in dims.receivers() {
            if b != i {
                out[dims.pair(b, i)] = score(dims, rates, duals, b, i);
            }
        }
    }
    out
}

/// Rows whose parent is fixed in advance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssocRestriction {
    pub fixed: Vec<Option<usize>>,
}

impl AssocRestriction {
    pub fn none(dims: &Dims) -> Self {
        Self { fixed: vec![None; dims.num_nodes()] }
    }

    /// Every SBS attached to the MBS.
    pub fn single_hop(dims: &Dims) -> Self {
        let mut r = Self::none(dims);
        dims.sbs().for_each(|b| r.fixed[b] = Some(0));
        r
    }

    fn get(&self, i: usize) -> Option<usize> {
        self.fixed.get(i).copied().flatten()
    }
}

/// Parent per node: the argmax of the scores, ties going to the MBS and
/// then the lowest index.
pub fn select(dims: &Dims, scores: &[f64], restriction: &AssocRestriction) -> Vec<Option<usize>> {
    let mut parents = vec![None; dims.num_nodes()];
    for i in dims.receivers() {
        if let Some(b) = restriction.get(i) {
            parents[i] = Some(b);
            continue;
        }
        let mut best = 0;
        for b in dims.bs().skip(1) {
            if b != i && scores[dims.pair(b, i)] > scores[dims.pair(best, i)] {
                best = b;
            }
        }
        parents[i] = Some(best);
    }
    parents
}

/// Diminishing step `a / (b + t)`.
pub fn step_size(config: &ScenarioConfig, t: usize) -> f64 {
    config.step_a / (config.step_b + t as f64)
}

/// Constraint residuals at `parents`, rates normalized by the bandwidth:
/// `(qos per node, backhaul per node, attachment)`.
pub fn residuals(
    inst: &Instance,
    parents: &[Option<usize>],
    rates: &[f64],
) -> (Vec<f64>, Vec<f64>, f64) {
    let d = inst.dims;
    let w = inst.bandwidth_hz;
    let r = |b: usize, i: usize| rates[d.pair(b, i)] / w;
    let mut qos = vec![0.0; d.num_nodes()];
    let mut back = vec![0.0; d.num_nodes()];
    for i in d.ues() {
        qos[i] = parents[i].map_or(0.0, |b| r(b, i)) - inst.min_rate_bps / w;
    }
    for b in d.sbs() {
        let incoming = parents[b].map_or(0.0, |p| r(p, b));
        let served: f64 = d.receivers().filter(|&i| parents[i] == Some(b)).map(|i| r(b, i)).sum();
        back[b] = incoming - served;
    }
    let attached = d.sbs().filter(|&b| parents[b] == Some(0)).count() as f64;
    let attach = if d.num_sbs == 0 { 0.0 } else { attached - 1.0 };
    (qos, back, attach)
}

/// One projected subgradient step on the dual.
pub fn subgradient_step(
    inst: &Instance,
    duals: &DualState,
    parents: &[Option<usize>],
    rates: &[f64],
    config: &ScenarioConfig,
) -> DualState {
    let delta = step_size(config, duals.t);
    let (qos, back, attach) = residuals(inst, parents, rates);
    let d = inst.dims;
    let mut next = duals.clone();
    for i in d.ues() {
        next.lambda[i] = (duals.lambda[i] - delta * qos[i]).max(0.0);
    }
    for b in d.sbs() {
        next.mu[b] = (duals.mu[b] - delta * back[b]).max(0.0);
    }
    next.nu = (duals.nu - delta * attach).max(0.0);
    next.t = duals.t + 1;
    next
}

/// Dual function value at `duals`, rates normalized by the bandwidth.
pub fn dual_objective(inst: &Instance, rates: &[f64], duals: &DualState, restriction: &AssocRestriction) -> f64 {
    let d = inst.dims;
    let norm: Vec<f64> = rates.iter().map(|r| r / inst.bandwidth_hz).collect();
    let scores = score_matrix(&d, &norm, duals);
    let parents = select(&d, &scores, restriction);
    let mut v: f64 = d.receivers().map(|i| scores[d.pair(parents[i].expect("attached"), i)]).sum();
    v -= d.ues().map(|i| duals.lambda[i]).sum::<f64>() * inst.min_rate_bps / inst.bandwidth_hz;
    v - duals.nu
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocTraceRow {
    pub t: usize,
    pub dual_objective: f64,
    pub dual_change: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[AssocTraceRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AssocOutcome {
    pub parents: Vec<Option<usize>>,
    pub duals: DualState,
    pub trace: Vec<AssocTraceRow>,
    /// Distinct repaired associations met along the iterations, in order.
    pub visited: Vec<Vec<Option<usize>>>,
}

/// Attaches the best-scoring SBS to the MBS when none is, then breaks
/// every directed cycle by moving its best MBS candidate to the MBS.
pub fn repair(dims: &Dims, parents: &mut [Option<usize>], scores: &[f64], restriction: &AssocRestriction) {
    let mbs_score = |b: usize| scores[dims.pair(0, b)];
    let pick = |members: &mut dyn Iterator<Item = usize>| {
        members
            .filter(|&b| restriction.get(b).is_none())
            .max_by(|&a, &b| mbs_score(a).total_cmp(&mbs_score(b)).then(b.cmp(&a)))
    };
    if dims.num_sbs > 0 && !dims.sbs().any(|b| parents[b] == Some(0)) {
        if let Some(b) = pick(&mut dims.sbs()) {
            parents[b] = Some(0);
        }
    }
    loop {
        let cycles = find_cycles(dims, parents);
        let Some(cycle) = cycles.first() else { break };
        let Some(b) = pick(&mut cycle.iter().copied()) else { break };
        parents[b] = Some(0);
    }
}

/// Dual iterations with `x` and `P` from `sol`, then repairs.
pub fn run_association(
    inst: &Instance,
    sol: &Solution,
    config: &ScenarioConfig,
    restriction: &AssocRestriction,
) -> AssocOutcome {
    let d = inst.dims;
    let rates = candidate_rates(inst, sol);
    let norm: Vec<f64> = rates.iter().map(|r| r / inst.bandwidth_hz).collect();
    let mut duals = DualState::new(&d);
    let mut trace = Vec::new();
    let mut visited: Vec<Vec<Option<usize>>> = Vec::new();
    let mut visit = |parents: &[Option<usize>], duals: &DualState| {
        let mut repaired = parents.to_vec();
        repair(&d, &mut repaired, &score_matrix(&d, &norm, duals), restriction);
        if !visited.contains(&repaired) {
            visited.push(repaired.clone());
        }
        repaired
    };
    let mut parents = select(&d, &score_matrix(&d, &norm, &duals), restriction);
    let mut repaired = visit(&parents, &duals);
    for _ in 0..config.max_assoc_iters {
        let next = subgradient_step(inst, &duals, &parents, &rates, config);
        let change = next.distance(&duals);
        duals = next;
        parents = select(&d, &score_matrix(&d, &norm, &duals), restriction);
        repaired = visit(&parents, &duals);
        trace.push(AssocTraceRow {
            t: duals.t,
            dual_objective: dual_objective(inst, &rates, &duals, restriction),
            dual_change: change,
        });
        if change < config.conv_tol {
            break;
        }
    }
    AssocOutcome { parents: repaired, duals, trace, visited }
}
