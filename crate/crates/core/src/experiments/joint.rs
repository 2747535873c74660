//! Alternating association, subchannel and power stages with a feasibility
//! guard between them.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assoc::{candidate_rates, run_association, AssocRestriction};
use crate::netmodel::{find_cycles, quick_check, rate_summary, rebalance_power, Instance, Solution, DEFAULT_TOL};
use crate::power::{run_pa, PaTraceRow};
use crate::solver::SubproblemCheck;
use crate::subchannel::{run_sa, SaTraceRow};
use crate::topology::{Dims, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Association,
    Subchannel,
    Power,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Init => "init",
            Stage::Association => "association",
            Stage::Subchannel => "subchannel",
            Stage::Power => "power",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTraceRow {
    pub outer: usize,
    pub stage: Stage,
    /// Sum rate of the incumbent after the stage, bps.
    pub sum_rate: f64,
    pub accepted: bool,
    /// Normalized QoS and backhaul shortfall of the incumbent.
    pub violation: f64,
}

/// Wall time per stage, seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub association: f64,
    pub subchannel: f64,
    pub power: f64,
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub solution: Solution,
    pub trace: Vec<JointTraceRow>,
    /// Outer iterations performed.
    pub outer_iters: usize,
    pub stage_times: StageTimes,
    pub sa_traces: Vec<Vec<SaTraceRow>>,
    pub pa_traces: Vec<Vec<PaTraceRow>>,
    pub checks: Vec<SubproblemCheck>,
}

/// Total QoS and backhaul shortfall in bits/s/Hz.
pub fn violation(inst: &Instance, sol: &Solution) -> f64 {
    let d = inst.dims;
    let rs = rate_summary(inst, sol);
    let mut v = 0.0;
    for i in d.ues() {
        v += (inst.min_rate_bps - rs.incoming[i]).max(0.0);
    }
    for b in d.sbs() {
        v += (rs.outgoing[b] - rs.incoming[b]).max(0.0);
    }
    v / inst.bandwidth_hz
}

/// Evaluation of a solution used by the guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standing {
    pub structural: bool,
    pub feasible: bool,
    pub violation: f64,
    pub sum_rate: f64,
}

pub fn standing(inst: &Instance, sol: &Solution) -> Standing {
    let q = quick_check(inst, sol, DEFAULT_TOL);
    Standing {
        structural: q.structural,
        feasible: q.feasible(),
        violation: q.summary.shortfall / inst.bandwidth_hz,
        sum_rate: q.summary.sum_rate,
    }
}

/// Whether `cand` may replace `inc`: a feasible incumbent is only replaced
/// by a feasible candidate with no lower sum rate; an infeasible one by any
/// structurally valid candidate that is feasible or has less shortfall.
pub fn improves(cand: &Standing, inc: &Standing) -> bool {
    if !cand.structural {
        return false;
    }
    if inc.feasible {
        cand.feasible && cand.sum_rate >= inc.sum_rate
    } else {
        cand.feasible || cand.violation < inc.violation - 1e-12
    }
}

/// Subchannels `m` on which `b` may start transmitting to `i` without
/// breaking the per-subchannel constraints.
pub fn free_subchannels(sol: &Solution, b: usize, i: usize) -> Vec<usize> {
    let d = sol.dims;
    (0..d.num_subchannels)
        .filter(|&m| {
            let b_busy = d.receivers().any(|j| j != b && sol.x(b, j, m) > 0.5);
            let b_rx = d.is_sbs(b) && d.bs().any(|bp| bp != b && sol.x(bp, b, m) > 0.5);
            let i_tx = d.is_sbs(i) && d.receivers().any(|j| j != i && sol.x(i, j, m) > 0.5);
            !(b_busy || b_rx || i_tx)
        })
        .collect()
}

fn best_free(inst: &Instance, sol: &Solution, b: usize, i: usize) -> Option<usize> {
    free_subchannels(sol, b, i)
        .into_iter()
        .max_by(|&a, &c| inst.gains.direct(b, i, a).total_cmp(&inst.gains.direct(b, i, c)).then(c.cmp(&a)))
}

fn grant(inst: &Instance, sol: &mut Solution, b: usize, i: usize, m: usize) {
    sol.set_x(b, i, m, 1.0);
    if !(sol.p(b, m) > 0.0) {
        sol.set_p(b, m, inst.max_power_w[b] / inst.dims.num_subchannels as f64);
    }
    rebalance_power(inst, sol);
}

/// Greedy completion of `sol.x` for the association in `sol.y`: every
/// child without a subchannel gets its best free one, shortfalls are
/// closed one subchannel at a time, then leftover subchannels go to the
/// child that gains most when the sum rate improves.
pub fn fill(inst: &Instance, sol: &mut Solution) {
    let d = inst.dims;
    let parents = sol.parents();
    let has_children = |b: usize| d.receivers().any(|i| parents[i] == Some(b));
    // Links off the association, and backhaul of idle SBSs, carry nothing.
    for b in d.bs() {
        for i in d.receivers() {
            if i != b && (parents[i] != Some(b) || (d.is_sbs(i) && !has_children(i))) {
                for m in 0..d.num_subchannels {
                    sol.set_x(b, i, m, 0.0);
                }
            }
        }
    }
    rebalance_power(inst, sol);
    for i in d.receivers() {
        let Some(b) = parents[i] else { continue };
        if d.is_sbs(i) && !has_children(i) {
            continue;
        }
        if sol.subchannels(b, i).is_empty() {
            if let Some(m) = best_free(inst, sol, b, i) {
                grant(inst, sol, b, i, m);
            }
        }
    }
    let mut stuck = vec![false; d.num_nodes()];
    for _ in 0..d.num_nodes() * d.num_subchannels {
        let rs = rate_summary(inst, sol);
        let mut worst: Option<(usize, f64)> = None;
        for i in d.ues() {
            let gap = inst.min_rate_bps - rs.incoming[i];
            if gap > 0.0 && !stuck[i] && worst.map_or(true, |(_, g)| gap > g) {
                worst = Some((i, gap));
            }
        }
        for b in d.sbs() {
            let gap = rs.outgoing[b] - rs.incoming[b];
            if gap > 0.0 && !stuck[b] && worst.map_or(true, |(_, g)| gap > g) {
                worst = Some((b, gap));
            }
        }
        let Some((i, _)) = worst else { break };
        let b = parents[i].expect("receivers are attached");
        match best_free(inst, sol, b, i) {
            Some(m) => grant(inst, sol, b, i, m),
            None => stuck[i] = true,
        }
    }
    let mut current = standing(inst, sol);
    for b in d.bs() {
        for m in 0..d.num_subchannels {
            let best = d
                .ues()
                .filter(|&i| parents[i] == Some(b) && free_subchannels(sol, b, i).contains(&m))
                .max_by(|&a, &c| inst.gains.direct(b, a, m).total_cmp(&inst.gains.direct(b, c, m)).then(c.cmp(&a)));
            let Some(i) = best else { continue };
            let mut cand = sol.clone();
            grant(inst, &mut cand, b, i, m);
            let s = standing(inst, &cand);
            if s.structural && s.violation <= current.violation + 1e-12 && s.sum_rate > current.sum_rate {
                *sol = cand;
                current = s;
            }
        }
    }
}

/// Attaches every idle SBS (one serving nobody) to the BS with the best
/// estimated backhaul rate, keeping at least one SBS on the MBS. Idle SBSs
/// carry no traffic, so the sum rate is unchanged.
pub fn reroute_idle(inst: &Instance, sol: &Solution, restriction: &AssocRestriction) -> Vec<Option<usize>> {
    let d = inst.dims;
    let rates = candidate_rates(inst, sol);
    let mut parents = sol.parents();
    for s in d.sbs() {
        if restriction.fixed.get(s).copied().flatten().is_some() || parents.contains(&Some(s)) {
            continue;
        }
        let mut best = 0;
        for b in d.sbs() {
            if b != s && rates[d.pair(b, s)] > rates[d.pair(best, s)] {
                best = b;
            }
        }
        let mut trial = parents.clone();
        trial[s] = Some(best);
        if d.sbs().any(|b| trial[b] == Some(0)) && find_cycles(&d, &trial).is_empty() {
            parents = trial;
        }
    }
    parents
}

/// All nodes on the MBS with a greedy orthogonal allocation at uniform power.
pub fn direct_access_parents(dims: &Dims) -> Vec<Option<usize>> {
    (0..dims.num_nodes()).map(|i| (i != 0).then_some(0)).collect()
}

pub fn initial_solution(inst: &Instance, parents: &[Option<usize>]) -> Solution {
    let mut sol = Solution::zeros(inst.dims);
    sol.set_parents(parents);
    fill(inst, &mut sol);
    sol
}

/// Moves the nodes whose parent changed, releasing their old subchannels
/// and filling in new ones.
pub fn materialize(inst: &Instance, sol: &Solution, parents: &[Option<usize>]) -> Solution {
    let mut out = sol.clone();
    out.set_parents(parents);
    fill(inst, &mut out);
    out
}

struct Guarded<'a> {
    inst: &'a Instance,
    sol: Solution,
    standing: Standing,
}

impl Guarded<'_> {
    fn offer(&mut self, cand: Solution) -> bool {
        self.offer_with(cand, false)
    }

    /// Like `offer`, but a feasible incumbent needs a strictly higher rate.
    fn offer_strict(&mut self, cand: Solution) -> bool {
        self.offer_with(cand, true)
    }

    fn offer_with(&mut self, cand: Solution, strict: bool) -> bool {
        let s = standing(self.inst, &cand);
        let better = improves(&s, &self.standing)
            && !(strict && self.standing.feasible && s.sum_rate <= self.standing.sum_rate * (1.0 + 1e-12));
        if better {
            self.sol = cand;
            self.standing = s;
            true
        } else {
            false
        }
    }
}

/// Alternates the three stages from `start` until the relative sum-rate
/// change falls below `conv_tol` or the outer limit is reached.
pub fn run_joint(
    inst: &Instance,
    config: &ScenarioConfig,
    restriction: &AssocRestriction,
    start: Solution,
) -> JointOutcome {
    let d = inst.dims;
    let mut g = Guarded { inst, standing: standing(inst, &start), sol: start };
    let mut trace = vec![JointTraceRow {
        outer: 0,
        stage: Stage::Init,
        sum_rate: g.standing.sum_rate,
        accepted: true,
        violation: g.standing.violation,
    }];
    let mut times = StageTimes::default();
    let mut sa_traces = Vec::new();
    let mut pa_traces = Vec::new();
    let mut checks = Vec::new();
    let mut outer_iters = 0;
    let free_rows = restriction.fixed.iter().filter(|f| f.is_none()).count() > 1;

    for outer in 1..=config.max_outer_iters {
        outer_iters = outer;
        let before = g.standing.sum_rate;

        let clock = Instant::now();
        let mut accepted = false;
        if free_rows || outer == 1 {
            let ao = run_association(inst, &g.sol, config, restriction);
            let start = g.sol.parents();
            let mut moves: Vec<(usize, Option<usize>)> = Vec::new();
            for cand in &ao.visited {
                if *cand == start {
                    continue;
                }
                for i in d.receivers() {
                    if cand[i] != start[i] && !moves.contains(&(i, cand[i])) {
                        moves.push((i, cand[i]));
                    }
                }
                accepted |= g.offer_strict(materialize(inst, &g.sol, cand));
            }
            for (i, b) in moves {
                let mut single = g.sol.parents();
                if single[i] == b {
                    continue;
                }
                single[i] = b;
                if find_cycles(&d, &single).is_empty() && d.sbs().any(|s| single[s] == Some(0)) {
                    accepted |= g.offer_strict(materialize(inst, &g.sol, &single));
                }
            }
            let idle = reroute_idle(inst, &g.sol, restriction);
            if idle != g.sol.parents() {
                accepted |= g.offer(materialize(inst, &g.sol, &idle));
            }
        }
        times.association += clock.elapsed().as_secs_f64();
        trace.push(row(outer, Stage::Association, &g, accepted));

        let clock = Instant::now();
        let sa = run_sa(inst, &g.sol, config);
        let mut cand = g.sol.clone();
        cand.x = sa.x;
        rebalance_power(inst, &mut cand);
        fill(inst, &mut cand);
        let accepted = g.offer(cand);
        sa_traces.push(sa.trace);
        checks.extend(sa.checks);
        times.subchannel += clock.elapsed().as_secs_f64();
        trace.push(row(outer, Stage::Subchannel, &g, accepted));

        let clock = Instant::now();
        let pa = run_pa(inst, &g.sol, config);
        let mut cand = g.sol.clone();
        cand.p = pa.p;
        let accepted = g.offer(cand);
        pa_traces.push(pa.trace);
        checks.extend(pa.checks);
        times.power += clock.elapsed().as_secs_f64();
        trace.push(row(outer, Stage::Power, &g, accepted));

        let after = g.standing.sum_rate;
        if g.standing.feasible && (after - before).abs() <= config.conv_tol * after.abs().max(1.0) {
            break;
        }
    }
    JointOutcome {
        solution: g.sol,
        trace,
        outer_iters,
        stage_times: times,
        sa_traces,
        pa_traces,
        checks,
    }
}

fn row(outer: usize, stage: Stage, g: &Guarded<'_>, accepted: bool) -> JointTraceRow {
    JointTraceRow { outer, stage, sum_rate: g.standing.sum_rate, accepted, violation: g.standing.violation }
}

/// First outer iteration whose relative sum-rate change is below `tol`.
pub fn converged_within(trace: &[JointTraceRow], tol: f64) -> Option<usize> {
    let ends: Vec<(usize, f64)> = trace
        .iter()
        .filter(|r| r.stage == Stage::Init || r.stage == Stage::Power)
        .map(|r| (r.outer, r.sum_rate))
        .collect();
    ends.windows(2)
        .find(|w| (w[1].1 - w[0].1).abs() < tol * w[1].1.abs().max(1.0))
        .map(|w| w[1].0)
}

/// Whether the sum rate never drops by more than `rel` between stages.
pub fn trace_is_monotone(trace: &[JointTraceRow], rel: f64) -> bool {
    trace.windows(2).all(|w| w[1].sum_rate >= w[0].sum_rate - rel * w[0].sum_rate.abs().max(1.0))
}
