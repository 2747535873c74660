//! Brute-force reference solver for toy instances.

use crate::error::OracleError;
use crate::netmodel::{find_cycles, quick_check, sum_rate, Instance, Solution, DEFAULT_TOL};
use crate::topology::Dims;

/// Upper limit on the enumeration count estimate.
pub const MAX_ENUMERATIONS: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub solution: Solution,
    pub objective: f64,
    /// Feasible points evaluated on the power grid.
    pub evaluated: u64,
}

/// Crude count of (association, allocation, power) combinations.
pub fn enumeration_bound(dims: &Dims, power_levels: usize) -> f64 {
    let receivers = dims.num_nodes() as f64 - 1.0;
    let nb = dims.num_bs() as f64;
    let m = dims.num_subchannels as f64;
    nb.powf(receivers) * 2f64.powf(receivers * m) * (power_levels as f64).powf(nb * m)
}

/// Every parent vector satisfying single attachment, at least one SBS on
/// the MBS, no mutual association and no cycle.
pub fn feasible_associations(dims: &Dims) -> Vec<Vec<Option<usize>>> {
    let receivers: Vec<usize> = dims.receivers().collect();
    let choices: Vec<Vec<usize>> = receivers.iter().map(|&i| dims.bs().filter(|&b| b != i).collect()).collect();
    let mut digit = vec![0usize; receivers.len()];
    let mut out = Vec::new();
    loop {
        let mut parents = vec![None; dims.num_nodes()];
        for (k, &i) in receivers.iter().enumerate() {
            parents[i] = Some(choices[k][digit[k]]);
        }
        let attached = dims.num_sbs == 0 || dims.sbs().any(|b| parents[b] == Some(0));
        if attached && find_cycles(dims, &parents).is_empty() {
            out.push(parents);
        }
        if !advance(&mut digit, |k| choices[k].len()) {
            return out;
        }
    }
}

fn advance(digit: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in 0..digit.len() {
        digit[k] += 1;
        if digit[k] < radix(k) {
            return true;
        }
        digit[k] = 0;
    }
    false
}

/// Subsets of tree links (bit k = link into receiver k) that one
/// subchannel can carry: one transmission per BS and no SBS both
/// transmitting and receiving.
fn subchannel_patterns(dims: &Dims, links: &[(usize, usize)]) -> Vec<u32> {
    (0u32..1 << links.len())
        .filter(|&mask| {
            dims.bs().all(|b| {
                let tx = links.iter().enumerate().filter(|&(k, &(p, _))| p == b && mask >> k & 1 == 1).count();
                let rx = links.iter().enumerate().filter(|&(k, &(_, i))| i == b && mask >> k & 1 == 1).count();
                tx <= 1 && tx + rx <= 1
            })
        })
        .collect()
}

struct Search<'a> {
    inst: &'a Instance,
    levels: usize,
    best: Option<(f64, Solution)>,
    evaluated: u64,
    /// Best feasible grid point of every (y, x) pattern.
    patterns: Vec<(f64, Solution)>,
}

impl Search<'_> {
    fn feasible_value(&self, sol: &Solution) -> Option<f64> {
        let q = quick_check(self.inst, sol, DEFAULT_TOL);
        q.feasible().then_some(q.summary.sum_rate)
    }

    /// Interference-free rates at full budget bound every link rate.
    fn optimistic(&self, sol: &Solution) -> (f64, bool) {
        let inst = self.inst;
        let d = inst.dims;
        let mut incoming = vec![0.0; d.num_nodes()];
        for i in d.receivers() {
            if let Some(b) = sol.parent(i) {
                for m in sol.subchannels(b, i) {
                    incoming[i] += inst.bandwidth_hz * (1.0 + inst.peak_snr(b, i, m)).log2();
                }
            }
        }
        let qos = d.ues().all(|i| incoming[i] >= inst.min_rate_bps * (1.0 - DEFAULT_TOL));
        (d.ues().map(|i| incoming[i]).sum(), qos)
    }

    fn power_grid(&mut self, sol: &mut Solution) {
        let d = self.inst.dims;
        let active: Vec<(usize, usize)> = d
            .bs()
            .flat_map(|b| (0..d.num_subchannels).map(move |m| (b, m)))
            .filter(|&(b, m)| d.receivers().any(|i| i != b && sol.x(b, i, m) > 0.5))
            .collect();
        // A used subchannel at zero power is the same point as leaving it unused.
        let mut digit = vec![0usize; active.len()];
        let mut pattern_best: Option<(f64, Solution)> = None;
        loop {
            let mut within = true;
            let mut spent = vec![0.0; d.num_bs()];
            for (k, &(b, m)) in active.iter().enumerate() {
                let p = self.inst.max_power_w[b] * (digit[k] + 1) as f64 / self.levels as f64;
                spent[b] += p;
                sol.set_p(b, m, p);
            }
            for b in d.bs() {
                within &= spent[b] <= self.inst.max_power_w[b] * (1.0 + 1e-12);
            }
            if within {
                if let Some(v) = self.feasible_value(sol) {
                    self.evaluated += 1;
                    if pattern_best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                        pattern_best = Some((v, sol.clone()));
                    }
                }
            }
            if !advance(&mut digit, |_| self.levels) {
                break;
            }
        }
        if let Some((v, s)) = pattern_best {
            if self.best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                self.best = Some((v, s.clone()));
            }
            self.patterns.push((v, s));
        }
    }

    fn run(&mut self) {
        let d = self.inst.dims;
        for parents in feasible_associations(&d) {
            let links: Vec<(usize, usize)> = d.receivers().map(|i| (parents[i].expect("attached"), i)).collect();
            let per_m = subchannel_patterns(&d, &links);
            let mut digit = vec![0usize; d.num_subchannels];
            loop {
                let mut sol = Solution::zeros(d);
                sol.set_parents(&parents);
                for (m, &k) in digit.iter().enumerate() {
                    for (bit, &(b, i)) in links.iter().enumerate() {
                        if per_m[k] >> bit & 1 == 1 {
                            sol.set_x(b, i, m, 1.0);
                        }
                    }
                }
                let (bound, qos) = self.optimistic(&sol);
                if qos && self.best.as_ref().map_or(true, |(bv, _)| bound > *bv) {
                    self.power_grid(&mut sol);
                }
                if !advance(&mut digit, |_| per_m.len()) {
                    break;
                }
            }
        }
    }
}

fn search(inst: &Instance, power_levels: usize) -> Result<Search<'_>, OracleError> {
    let bound = enumeration_bound(&inst.dims, power_levels);
    if bound > MAX_ENUMERATIONS {
        return Err(OracleError::TooLarge(bound));
    }
    let mut s = Search { inst, levels: power_levels.max(1), best: None, evaluated: 0, patterns: Vec::new() };
    s.run();
    Ok(s)
}

/// Exhaustive maximizer of the sum rate over feasible associations,
/// binary allocations and the power grid `k * P_max / power_levels`,
/// `k = 0..=power_levels`, per (BS, subchannel).
pub fn exhaustive_solve(inst: &Instance, power_levels: usize) -> Result<OracleSolution, OracleError> {
    let s = search(inst, power_levels)?;
    let (objective, solution) = s.best.ok_or(OracleError::NoFeasible)?;
    Ok(OracleSolution { solution, objective, evaluated: s.evaluated })
}

/// [`exhaustive_solve`] followed by a continuous power polish of every
/// pattern that could still overtake the incumbent.
pub fn exhaustive_solve_refined(inst: &Instance, power_levels: usize, min_step_frac: f64) -> Result<OracleSolution, OracleError> {
    let mut s = search(inst, power_levels)?;
    let (mut objective, mut solution) = s.best.take().ok_or(OracleError::NoFeasible)?;
    s.patterns.sort_by(|a, b| b.0.total_cmp(&a.0));
    let coarse = inst.max_power_w.iter().copied().fold(0.0, f64::max) / power_levels.max(1) as f64;
    for (_, start) in &s.patterns {
        let (bound, _) = s.optimistic(start);
        if bound <= objective {
            continue;
        }
        let polished = polish(inst, start, coarse / 2.0, coarse * min_step_frac);
        let v = sum_rate(inst, &polished);
        if v > objective {
            objective = v;
            solution = polished;
        }
    }
    Ok(OracleSolution { solution, objective, evaluated: s.evaluated })
}

/// [`grid_refine`] with the step halved until it falls below `min_step`.
pub fn polish(inst: &Instance, sol: &Solution, mut step: f64, min_step: f64) -> Solution {
    let mut cur = sol.clone();
    while step >= min_step && step > 0.0 {
        cur = grid_refine(inst, &cur, step);
        step /= 2.0;
    }
    cur
}

/// Coordinate-wise power polish on used (BS, subchannel) pairs with `y`
/// and `x` held fixed: raise, lower, or shift `step` watts between two
/// subchannels of one BS while feasibility holds and the sum rate rises.
pub fn grid_refine(inst: &Instance, sol: &Solution, step: f64) -> Solution {
    let d = inst.dims;
    let mut cur = sol.clone();
    let feasible = |s: &Solution| quick_check(inst, s, DEFAULT_TOL).feasible();
    if !(step > 0.0) || !feasible(&cur) {
        return cur;
    }
    let mut value = sum_rate(inst, &cur);
    let used = |s: &Solution, b: usize, m: usize| d.receivers().any(|i| i != b && s.x(b, i, m) > 0.5);
    loop {
        let mut improved = false;
        for b in d.bs() {
            let pmax = inst.max_power_w[b];
            let ms: Vec<usize> = (0..d.num_subchannels).filter(|&m| used(&cur, b, m)).collect();
            let mut moves: Vec<Vec<(usize, f64)>> = Vec::new();
            for &m in &ms {
                moves.push(vec![(m, step)]);
                moves.push(vec![(m, -step)]);
                for &m2 in &ms {
                    if m2 != m {
                        moves.push(vec![(m, step), (m2, -step)]);
                    }
                }
            }
            for mv in moves {
                let mut cand = cur.clone();
                let mut ok = true;
                for &(m, dp) in &mv {
                    let p = cand.p(b, m) + dp;
                    ok &= p >= 0.0;
                    cand.set_p(b, m, p.max(0.0));
                }
                let total: f64 = (0..d.num_subchannels).map(|m| cand.p(b, m)).sum();
                if !ok || total > pmax * (1.0 + 1e-12) || !feasible(&cand) {
                    continue;
                }
                let v = sum_rate(inst, &cand);
                if v > value * (1.0 + 1e-12) {
                    value = v;
                    cur = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            return cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{blank_instance, validate};

    /// One MBS and one UE on one subchannel with unit-ish gain.
    fn single_link(min_rate: f64) -> Instance {
        let mut inst = blank_instance(Dims::new(0, 1, 1), 1e-3, 1e6, 1.0, min_rate);
        inst.gains.set_direct(0, 1, 0, 1.0);
        inst
    }

    #[test]
    fn single_link_hand_enumeration() {
        let inst = single_link(0.0);
        let out = exhaustive_solve(&inst, 2).unwrap();
        // Candidates: x in {0, 1}, p in {0, 0.5, 1}; full power wins.
        assert_eq!(out.solution.p(0, 0), 1.0);
        assert_eq!(out.solution.x(0, 1, 0), 1.0);
        assert!((out.objective - 1e6 * (1.0 + 1e3f64).log2()).abs() < 1e-6);
    }

    #[test]
    fn b1_k1_m1_hand_enumeration() {
        // MBS -> SBS backhaul and SBS -> UE access compete for one subchannel
        // unless the UE attaches directly.
        let mut inst = blank_instance(Dims::new(1, 1, 1), 1e-3, 1e6, 1.0, 0.0);
        inst.gains.set_direct(0, 2, 0, 0.01);
        inst.gains.set_direct(1, 2, 0, 1.0);
        inst.gains.set_direct(0, 1, 0, 1.0);
        let out = exhaustive_solve(&inst, 2).unwrap();
        // The SBS route cannot carry traffic on a single subchannel, so the
        // best feasible choice is direct access at full power.
        assert_eq!(out.solution.parent(2), Some(0));
        let want = 1e6 * (1.0 + 10.0f64).log2();
        assert!((out.objective - want).abs() < 1e-6 * want);
    }

    #[test]
    fn too_large_is_rejected() {
        let inst = blank_instance(Dims::new(3, 6, 4), 1e-3, 1e6, 1.0, 0.0);
        assert!(matches!(exhaustive_solve(&inst, 4), Err(OracleError::TooLarge(_))));
    }

    #[test]
    fn unreachable_rate_has_no_solution() {
        let inst = single_link(1e12);
        assert_eq!(exhaustive_solve(&inst, 2), Err(OracleError::NoFeasible));
    }

    #[test]
    fn associations_are_trees() {
        let d = Dims::new(2, 1, 1);
        let all = feasible_associations(&d);
        // SBS parents: (0,0), (0,1), (2,0); UE has 3 choices.
        assert_eq!(all.len(), 9);
        for p in all {
            assert!(find_cycles(&d, &p).is_empty());
        }
    }

    #[test]
    fn step_larger_than_budget_is_a_no_op() {
        let inst = single_link(0.0);
        let sol = single_power(&inst, 0.3);
        assert_eq!(grid_refine(&inst, &sol, 2.0), sol);
    }

    #[test]
    fn zero_power_climbs_to_budget() {
        let inst = single_link(0.0);
        let out = grid_refine(&inst, &single_power(&inst, 0.0), 0.125);
        assert!((out.p(0, 0) - 1.0).abs() < 1e-12);
    }

    fn random_tiny(seed: u64, num_sbs: usize) -> Instance {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Dims::new(num_sbs, 2, 2);
        let mut inst = blank_instance(d, 1e-3, 1e6, 1.0, 5e5);
        for v in inst.gains.direct.iter_mut() {
            *v = rng.gen_range(0.01..2.0);
        }
        for v in inst.gains.cross.iter_mut() {
            *v = rng.gen_range(0.0..0.05);
        }
        inst
    }

    #[test]
    fn doubling_levels_never_decreases() {
        for seed in 0..4 {
            let inst = random_tiny(seed, 1);
            let a = exhaustive_solve(&inst, 2).unwrap().objective;
            let b = exhaustive_solve(&inst, 4).unwrap().objective;
            assert!(b >= a - 1e-9, "seed {seed}: {b} < {a}");
        }
    }

    #[test]
    fn output_passes_validate_exactly_on_binaries() {
        for seed in 0..4 {
            let inst = random_tiny(seed, 2);
            let out = exhaustive_solve_refined(&inst, 2, 1e-3).unwrap();
            let report = validate(&inst, &out.solution, DEFAULT_TOL).unwrap();
            assert!(report.feasible && report.cycles.is_empty(), "{}", report.diagnostics());
            assert!(out.solution.x.iter().chain(&out.solution.y).all(|&v| v == 0.0 || v == 1.0));
            assert!((sum_rate(&inst, &out.solution) - out.objective).abs() < 1e-6);
        }
    }

    #[test]
    fn refinement_never_loses() {
        for seed in 0..4 {
            let inst = random_tiny(seed, 1);
            let a = exhaustive_solve(&inst, 2).unwrap().objective;
            let b = exhaustive_solve_refined(&inst, 2, 1e-3).unwrap().objective;
            assert!(b >= a);
        }
    }

    #[test]
    fn polish_matches_closed_form_on_one_link() {
        // One link: the rate is increasing in power, so the optimum is the
        // budget and the polish must land within one final step of it.
        let inst = single_link(0.0);
        let sol = single_power(&inst, 0.3);
        let step = 1e-3;
        let out = polish(&inst, &sol, 0.25, step);
        let slope = inst.bandwidth_hz / std::f64::consts::LN_2 * 1e3 / (1.0 + 1e3 * 0.3);
        let gap = sum_rate(&inst, &single_power(&inst, 1.0)) - sum_rate(&inst, &out);
        assert!(gap <= 2.0 * step * slope, "gap {gap}");
    }

    fn single_power(inst: &Instance, p: f64) -> Solution {
        let mut sol = Solution::zeros(inst.dims);
        sol.set_y(0, 1, 1.0);
        sol.set_x(0, 1, 0, 1.0);
        sol.set_p(0, 0, p);
        sol
    }
}
