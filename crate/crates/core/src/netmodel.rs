//! SINR and rate evaluation, the solution container, and the feasibility
//! validator for the joint allocation problem.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::GainTable;
use crate::error::NetError;
use crate::topology::{Dims, ScenarioConfig};
use crate::units::{dbm_to_watts, noise_power_watts};

/// Default relative tolerance of [`validate`].
pub const DEFAULT_TOL: f64 = 1e-6;

/// Gains plus the scalar parameters every stage needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub dims: Dims,
    pub gains: GainTable,
    pub noise_w: f64,
    pub bandwidth_hz: f64,
    /// Per-BS power budget in watts, indexed by BS id.
    pub max_power_w: Vec<f64>,
    pub min_rate_bps: f64,
}

impl Instance {
    pub fn new(config: &ScenarioConfig, gains: GainTable) -> Self {
        let dims = gains.dims;
        let mut max_power_w = vec![dbm_to_watts(config.max_power_sbs_dbm); dims.num_bs()];
        max_power_w[0] = dbm_to_watts(config.max_power_mbs_dbm);
        Self {
            dims,
            gains,
            noise_w: noise_power_watts(config.noise_density_dbm_hz, config.bandwidth_hz),
            bandwidth_hz: config.bandwidth_hz,
            max_power_w,
            min_rate_bps: config.min_rate_bps,
        }
    }

    /// Interference-free SNR of link (b, i) on `m` at full budget.
    pub fn peak_snr(&self, b: usize, i: usize, m: usize) -> f64 {
        self.gains.direct(b, i, m) * self.max_power_w[b] / self.noise_w
    }

    /// Largest peak SNR over all links and subchannels.
    pub fn max_snr(&self) -> f64 {
        let d = self.dims;
        let mut best = 0.0f64;
        for b in d.bs() {
            for i in d.receivers() {
                if b != i {
                    for m in 0..d.num_subchannels {
                        best = best.max(self.peak_snr(b, i, m));
                    }
                }
            }
        }
        best
    }
}

/// Association `y`, subchannel allocation `x` and power `p` (watts).
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub dims: Dims,
    /// `y[dims.pair(b, i)]`
    pub y: Vec<f64>,
    /// `x[dims.link(b, i, m)]`
    pub x: Vec<f64>,
    /// `p[dims.bs_sub(b, m)]`
    pub p: Vec<f64>,
}

impl Solution {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            y: vec![0.0; dims.pair_len()],
            x: vec![0.0; dims.link_len()],
            p: vec![0.0; dims.power_len()],
        }
    }

    #[inline]
    pub fn y(&self, b: usize, i: usize) -> f64 {
        self.y[self.dims.pair(b, i)]
    }

    #[inline]
    pub fn x(&self, b: usize, i: usize, m: usize) -> f64 {
        self.x[self.dims.link(b, i, m)]
    }

    #[inline]
    pub fn p(&self, b: usize, m: usize) -> f64 {
        self.p[self.dims.bs_sub(b, m)]
    }

    pub fn set_y(&mut self, b: usize, i: usize, v: f64) {
        let k = self.dims.pair(b, i);
        self.y[k] = v;
    }

    pub fn set_x(&mut self, b: usize, i: usize, m: usize, v: f64) {
        let k = self.dims.link(b, i, m);
        self.x[k] = v;
    }

    pub fn set_p(&mut self, b: usize, m: usize, v: f64) {
        let k = self.dims.bs_sub(b, m);
        self.p[k] = v;
    }

    /// Parent BS of node `i`: the BS with the largest `y` above one half.
    pub fn parent(&self, i: usize) -> Option<usize> {
        let mut best = None;
        let mut best_y = 0.5;
        for b in self.dims.bs() {
            let v = self.y(b, i);
            if b != i && v > best_y {
                best_y = v;
                best = Some(b);
            }
        }
        best
    }

    /// Parent per node (index 0, the MBS, has none).
    pub fn parents(&self) -> Vec<Option<usize>> {
        (0..self.dims.num_nodes())
            .map(|i| if i == 0 { None } else { self.parent(i) })
            .collect()
    }

    /// Replaces `y` with the binary association given by `parents`.
    pub fn set_parents(&mut self, parents: &[Option<usize>]) {
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for (i, p) in parents.iter().enumerate() {
            if let Some(b) = *p {
                self.set_y(b, i, 1.0);
            }
        }
    }

    /// Subchannels on which `b` transmits to `i` (x above one half).
    pub fn subchannels(&self, b: usize, i: usize) -> Vec<usize> {
        (0..self.dims.num_subchannels).filter(|&m| self.x(b, i, m) > 0.5).collect()
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<(), NetError> {
        let checks = [
            ("y", dims.pair_len(), self.y.len()),
            ("x", dims.link_len(), self.x.len()),
            ("P", dims.power_len(), self.p.len()),
        ];
        for (what, expected, got) in checks {
            if expected != got {
                return Err(NetError::Dimension { what, expected, got });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionJson {
    dims: Dims,
    y: Vec<(usize, usize, f64)>,
    x: Vec<(usize, usize, usize, f64)>,
    p: Vec<f64>,
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let d = self.dims;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for b in d.bs() {
            for i in 0..d.num_nodes() {
                if self.y(b, i) != 0.0 {
                    y.push((b, i, self.y(b, i)));
                }
                for m in 0..d.num_subchannels {
                    if self.x(b, i, m) != 0.0 {
                        x.push((b, i, m, self.x(b, i, m)));
                    }
                }
            }
        }
        SolutionJson { dims: d, y, x, p: self.p.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Solution {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = SolutionJson::deserialize(de)?;
        let d = raw.dims;
        if raw.p.len() != d.power_len() {
            return Err(D::Error::custom("power vector length mismatch"));
        }
        let mut sol = Solution::zeros(d);
        sol.p = raw.p;
        for (b, i, v) in raw.y {
            if b >= d.num_bs() || i >= d.num_nodes() {
                return Err(D::Error::custom("y index out of range"));
            }
            sol.set_y(b, i, v);
        }
        for (b, i, m, v) in raw.x {
            if b >= d.num_bs() || i >= d.num_nodes() || m >= d.num_subchannels {
                return Err(D::Error::custom("x index out of range"));
            }
            sol.set_x(b, i, m, v);
        }
        Ok(sol)
    }
}

/// Co-channel transmissions `(b', i', x * P)` per subchannel.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub per_subchannel: Vec<Vec<(usize, usize, f64)>>,
}

impl ActiveSet {
    pub fn new(dims: &Dims, x: &[f64], p: &[f64]) -> Self {
        let mut per_subchannel = vec![Vec::new(); dims.num_subchannels];
        for b in dims.bs() {
            for i in dims.receivers() {
                if i == b {
                    continue;
                }
                for (m, list) in per_subchannel.iter_mut().enumerate() {
                    let w = x[dims.link(b, i, m)] * p[dims.bs_sub(b, m)];
                    if w > 0.0 {
                        list.push((b, i, w));
                    }
                }
            }
        }
        Self { per_subchannel }
    }

    /// Interference at the receiver of link (b, i) on `m`.
    pub fn interference(&self, gains: &GainTable, b: usize, i: usize, m: usize) -> f64 {
        self.per_subchannel[m]
            .iter()
            .filter(|&&(bp, ip, _)| interferes(b, i, bp, ip))
            .map(|&(bp, ip, w)| w * gains.cross(b, bp, i, ip, m))
            .sum()
    }
}

/// Whether transmission (b', i') counts as interference for link (b, i).
#[inline]
pub fn interferes(b: usize, i: usize, bp: usize, ip: usize) -> bool {
    bp != b && bp != i && ip != b && ip != bp && ip != i
}

/// Interference power at the receiver of (b, i) on `m`.
pub fn interference(inst: &Instance, x: &[f64], p: &[f64], b: usize, i: usize, m: usize) -> f64 {
    let d = &inst.dims;
    let mut total = 0.0;
    for bp in d.bs() {
        if bp == b || bp == i {
            continue;
        }
        let pw = p[d.bs_sub(bp, m)];
        if pw == 0.0 {
            continue;
        }
        for ip in d.receivers() {
            if interferes(b, i, bp, ip) {
                let xv = x[d.link(bp, ip, m)];
                if xv != 0.0 {
                    total += xv * inst.gains.cross(b, bp, i, ip, m) * pw;
                }
            }
        }
    }
    total
}

/// SINR of link (b, i) on subchannel `m`.
pub fn sinr(inst: &Instance, x: &[f64], p: &[f64], b: usize, i: usize, m: usize) -> f64 {
    let signal = inst.gains.direct(b, i, m) * p[inst.dims.bs_sub(b, m)];
    signal / (interference(inst, x, p, b, i, m) + inst.noise_w)
}

/// Shannon rate `W log2(1 + sinr)` in bps.
pub fn rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Rate of every link (b, i, m), scheduled or not, at the current
/// interference; indexed by `dims.link`. Self pairs hold 0.
pub fn link_rates(inst: &Instance, sol: &Solution) -> Vec<f64> {
    let d = &inst.dims;
    let active = ActiveSet::new(d, &sol.x, &sol.p);
    let mut out = vec![0.0; d.link_len()];
    for b in d.bs() {
        for i in d.receivers() {
            if i == b {
                continue;
            }
            for m in 0..d.num_subchannels {
                let signal = inst.gains.direct(b, i, m) * sol.p(b, m);
                if signal > 0.0 {
                    let s = signal / (active.interference(&inst.gains, b, i, m) + inst.noise_w);
                    out[d.link(b, i, m)] = rate(s, inst.bandwidth_hz);
                }
            }
        }
    }
    out
}

/// Per-node rate bookkeeping derived from `y * x * R`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    /// Rate delivered to each node from its parent(s), per node id.
    pub incoming: Vec<f64>,
    /// Rate each BS sends to its children, per BS id.
    pub outgoing: Vec<f64>,
    /// Sum of UE incoming rates.
    pub sum_rate: f64,
}

pub fn rate_summary(inst: &Instance, sol: &Solution) -> RateSummary {
    let d = &inst.dims;
    let rates = link_rates(inst, sol);
    let mut incoming = vec![0.0; d.num_nodes()];
    let mut outgoing = vec![0.0; d.num_bs()];
    for b in d.bs() {
        for i in d.receivers() {
            let y = sol.y(b, i);
            if i == b || y == 0.0 {
                continue;
            }
            for m in 0..d.num_subchannels {
                let k = d.link(b, i, m);
                let r = y * sol.x[k] * rates[k];
                incoming[i] += r;
                outgoing[b] += r;
            }
        }
    }
    let sum_rate = d.ues().map(|i| incoming[i]).sum();
    RateSummary { incoming, outgoing, sum_rate }
}

/// Objective of the joint problem: total UE access rate in bps.
pub fn sum_rate(inst: &Instance, sol: &Solution) -> f64 {
    rate_summary(inst, sol).sum_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstraintId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
}

impl ConstraintId {
    pub const ALL: [ConstraintId; 11] = [
        ConstraintId::C1,
        ConstraintId::C2,
        ConstraintId::C3,
        ConstraintId::C4,
        ConstraintId::C5,
        ConstraintId::C6,
        ConstraintId::C7,
        ConstraintId::C8,
        ConstraintId::C9,
        ConstraintId::C10,
        ConstraintId::C11,
    ];

    pub fn describe(self) -> &'static str {
        match self {
            ConstraintId::C1 => "UE minimum rate",
            ConstraintId::C2 => "backhaul rate covers served rate",
            ConstraintId::C3 => "one child link per BS subchannel",
            ConstraintId::C4 => "half-duplex SBS",
            ConstraintId::C5 => "exactly one parent",
            ConstraintId::C6 => "some SBS attached to the MBS",
            ConstraintId::C7 => "no two-cycles",
            ConstraintId::C8 => "power budget",
            ConstraintId::C9 => "nonnegative power",
            ConstraintId::C10 => "binary association",
            ConstraintId::C11 => "binary allocation",
        }
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One constraint instance; `slack >= 0` means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub id: ConstraintId,
    pub index: String,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub id: ConstraintId,
    pub pass: bool,
    pub worst_slack: f64,
    pub worst_index: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub rows: Vec<ConstraintRow>,
    pub feasible: bool,
    /// Directed cycles of the association graph. Reported, not failed.
    pub cycles: Vec<Vec<usize>>,
}

impl ConstraintReport {
    pub fn summary(&self) -> Vec<ConstraintSummary> {
        ConstraintId::ALL
            .iter()
            .map(|&id| {
                let mut s = ConstraintSummary {
                    id,
                    pass: true,
                    worst_slack: f64::INFINITY,
                    worst_index: String::new(),
                };
                for r in self.rows.iter().filter(|r| r.id == id) {
                    s.pass &= r.pass;
                    if r.slack < s.worst_slack {
                        s.worst_slack = r.slack;
                        s.worst_index = r.index.clone();
                    }
                }
                s
            })
            .collect()
    }

    pub fn passes(&self, id: ConstraintId) -> bool {
        self.rows.iter().filter(|r| r.id == id).all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    /// Short human-readable list of failing constraint instances.
    pub fn diagnostics(&self) -> String {
        let parts: Vec<String> = self
            .failures()
            .take(8)
            .map(|r| format!("{} {} slack {:.3e}", r.id, r.index, r.slack))
            .collect();
        if parts.is_empty() {
            "feasible".to_string()
        } else {
            parts.join("; ")
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["constraint", "index", "slack", "pass"])?;
        for r in &self.rows {
            w.write_record([r.id.to_string(), r.index.clone(), format!("{:.9e}", r.slack), r.pass.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Directed cycles among SBS parent pointers.
pub fn find_cycles(dims: &Dims, parents: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut cycles = Vec::new();
    let mut state = vec![0u8; dims.num_bs()];
    for start in dims.sbs() {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut node = start;
        loop {
            if node == 0 || state[node] == 2 {
                break;
            }
            if state[node] == 1 {
                let pos = path.iter().position(|&n| n == node).expect("on path");
                cycles.push(path[pos..].to_vec());
                break;
            }
            state[node] = 1;
            path.push(node);
            match parents.get(node).copied().flatten() {
                Some(p) if dims.is_bs(p) => node = p,
                _ => break,
            }
        }
        for n in path {
            state[n] = 2;
        }
    }
    cycles
}

/// Checks every constraint of the joint problem with relative tolerance
/// `tol`.
pub fn validate(inst: &Instance, sol: &Solution, tol: f64) -> Result<ConstraintReport, NetError> {
    sol.check_dims(&inst.dims)?;
    let d = &inst.dims;
    let mm = d.num_subchannels;
    let mut rows = Vec::new();
    let mut push = |id: ConstraintId, index: String, slack: f64, allowed: f64| {
        rows.push(ConstraintRow { id, index, slack, pass: slack >= -allowed });
    };

    let rs = rate_summary(inst, sol);
    for i in d.ues() {
        let slack = rs.incoming[i] - inst.min_rate_bps;
        push(ConstraintId::C1, format!("i={i}"), slack, tol * inst.min_rate_bps.max(1.0));
    }
    for b in d.sbs() {
        let (lhs, rhs) = (rs.incoming[b], rs.outgoing[b]);
        push(ConstraintId::C2, format!("b={b}"), lhs - rhs, tol * lhs.max(rhs).max(1.0));
    }
    for b in d.bs() {
        for m in 0..mm {
            let used: f64 = d.receivers().filter(|&i| i != b).map(|i| sol.x(b, i, m)).sum();
            push(ConstraintId::C3, format!("b={b},m={m}"), 1.0 - used, tol);
        }
    }
    for b in d.sbs() {
        for m in 0..mm {
            let tx: f64 = d.receivers().filter(|&i| i != b).map(|i| sol.x(b, i, m)).sum();
            let rx: f64 = d.bs().filter(|&bp| bp != b).map(|bp| sol.x(bp, b, m)).sum();
            push(ConstraintId::C4, format!("b={b},m={m}"), 1.0 - tx - rx, tol);
        }
    }
    for i in d.receivers() {
        let s: f64 = d.bs().map(|b| sol.y(b, i)).sum();
        push(ConstraintId::C5, format!("i={i}"), -(s - 1.0).abs(), tol);
    }
    let to_mbs: f64 = d.sbs().map(|b| sol.y(0, b)).sum();
    let c6 = if d.num_sbs == 0 { 0.0 } else { to_mbs - 1.0 };
    push(ConstraintId::C6, "mbs".to_string(), c6, tol);
    for b in d.bs() {
        for bp in d.bs() {
            if bp > b {
                let s = sol.y(b, bp) + sol.y(bp, b);
                push(ConstraintId::C7, format!("b={b},b'={bp}"), 1.0 - s, tol);
            }
        }
    }
    for b in d.bs() {
        let pmax = inst.max_power_w[b];
        let total: f64 = (0..mm).map(|m| sol.p(b, m)).sum();
        push(ConstraintId::C8, format!("b={b}"), pmax - total, tol * pmax);
        let lowest = (0..mm).map(|m| sol.p(b, m)).fold(f64::INFINITY, f64::min);
        push(ConstraintId::C9, format!("b={b}"), lowest, tol * pmax);
    }
    let binary_gap = |v: f64| if v.is_finite() { v.abs().min((v - 1.0).abs()) } else { f64::INFINITY };
    for b in d.bs() {
        for i in 0..d.num_nodes() {
            let v = sol.y(b, i);
            let gap = if i == b || i == 0 { v.abs() } else { binary_gap(v) };
            push(ConstraintId::C10, format!("b={b},i={i}"), -gap, tol);
            for m in 0..mm {
                let v = sol.x(b, i, m);
                let gap = if i == b || i == 0 { v.abs() } else { binary_gap(v) };
                push(ConstraintId::C11, format!("b={b},i={i},m={m}"), -gap, tol);
            }
        }
    }

    let feasible = rows.iter().all(|r| r.pass);
    let cycles = find_cycles(d, &sol.parents());
    Ok(ConstraintReport { rows, feasible, cycles })
}

/// Verdict of [`validate`] without the per-row report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuickCheck {
    /// Every constraint other than QoS and backhaul holds, with no cycle.
    pub structural: bool,
    /// QoS and backhaul constraints hold.
    pub rates: bool,
    pub summary: RateSummaryTotals,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSummaryTotals {
    pub sum_rate: f64,
    /// QoS and backhaul shortfall in bps.
    pub shortfall: f64,
}

impl QuickCheck {
    pub fn feasible(&self) -> bool {
        self.structural && self.rates
    }
}

/// Same tolerances as [`validate`], for use in inner loops.
pub fn quick_check(inst: &Instance, sol: &Solution, tol: f64) -> QuickCheck {
    let d = &inst.dims;
    let rs = rate_summary(inst, sol);
    let mut rates = true;
    let mut shortfall = 0.0;
    for i in d.ues() {
        let slack = rs.incoming[i] - inst.min_rate_bps;
        rates &= slack >= -tol * inst.min_rate_bps.max(1.0);
        shortfall += (-slack).max(0.0);
    }
    for b in d.sbs() {
        let (lhs, rhs) = (rs.incoming[b], rs.outgoing[b]);
        rates &= lhs - rhs >= -tol * lhs.max(rhs).max(1.0);
        shortfall += (rhs - lhs).max(0.0);
    }
    let structural = structural_ok(inst, sol, tol) && find_cycles(d, &sol.parents()).is_empty();
    QuickCheck { structural, rates, summary: RateSummaryTotals { sum_rate: rs.sum_rate, shortfall } }
}

fn structural_ok(inst: &Instance, sol: &Solution, tol: f64) -> bool {
    let d = &inst.dims;
    let mm = d.num_subchannels;
    for b in d.bs() {
        for m in 0..mm {
            let tx: f64 = d.receivers().filter(|&i| i != b).map(|i| sol.x(b, i, m)).sum();
            if 1.0 - tx < -tol {
                return false;
            }
            if d.is_sbs(b) {
                let rx: f64 = d.bs().filter(|&bp| bp != b).map(|bp| sol.x(bp, b, m)).sum();
                if 1.0 - tx - rx < -tol {
                    return false;
                }
            }
        }
    }
    for i in d.receivers() {
        let s: f64 = d.bs().map(|b| sol.y(b, i)).sum();
        if (s - 1.0).abs() > tol {
            return false;
        }
    }
    let to_mbs: f64 = d.sbs().map(|b| sol.y(0, b)).sum();
    if d.num_sbs > 0 && to_mbs - 1.0 < -tol {
        return false;
    }
    for b in d.bs() {
        for bp in d.bs() {
            if bp > b && 1.0 - sol.y(b, bp) - sol.y(bp, b) < -tol {
                return false;
            }
        }
    }
    for b in d.bs() {
        let pmax = inst.max_power_w[b];
        let total: f64 = (0..mm).map(|m| sol.p(b, m)).sum();
        let lowest = (0..mm).map(|m| sol.p(b, m)).fold(f64::INFINITY, f64::min);
        if pmax - total < -tol * pmax || lowest < -tol * pmax {
            return false;
        }
    }
    let binary_gap = |v: f64| if v.is_finite() { v.abs().min((v - 1.0).abs()) } else { f64::INFINITY };
    for b in d.bs() {
        for i in 0..d.num_nodes() {
            let gap = |v: f64| if i == b || i == 0 { v.abs() } else { binary_gap(v) };
            if gap(sol.y(b, i)) > tol {
                return false;
            }
            for m in 0..mm {
                if gap(sol.x(b, i, m)) > tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Powers used to evaluate links a BS does not currently power: an
/// unpowered (b, m) is valued at the uniform share `P_max / M`.
pub fn prospective_power(inst: &Instance, p: &[f64]) -> Vec<f64> {
    let d = &inst.dims;
    let share = |b: usize| inst.max_power_w[b] / d.num_subchannels as f64;
    let mut out = p.to_vec();
    for b in d.bs() {
        for m in 0..d.num_subchannels {
            let k = d.bs_sub(b, m);
            if !(out[k] > 0.0) {
                out[k] = share(b);
            }
        }
    }
    out
}

/// Makes `sol.p` consistent with `sol.x`: idle (b, m) pairs get no power,
/// newly used unpowered pairs get the uniform share, and a BS over budget
/// is scaled back onto it.
pub fn rebalance_power(inst: &Instance, sol: &mut Solution) {
    let d = inst.dims;
    for b in d.bs() {
        let share = inst.max_power_w[b] / d.num_subchannels as f64;
        for m in 0..d.num_subchannels {
            let used = d.receivers().any(|i| i != b && sol.x(b, i, m) > 0.5);
            let p = sol.p(b, m);
            if !used {
                sol.set_p(b, m, 0.0);
            } else if !(p > 0.0) {
                sol.set_p(b, m, share);
            }
        }
        let total: f64 = (0..d.num_subchannels).map(|m| sol.p(b, m)).sum();
        if total > inst.max_power_w[b] {
            let scale = inst.max_power_w[b] / total;
            for m in 0..d.num_subchannels {
                let v = sol.p(b, m) * scale;
                sol.set_p(b, m, v);
            }
        }
    }
}

/// Hand-buildable instance with zero gains, for tests and examples.
pub fn blank_instance(dims: Dims, noise_w: f64, bandwidth_hz: f64, max_power_w: f64, min_rate_bps: f64) -> Instance {
    Instance {
        dims,
        gains: GainTable::zeros(dims),
        noise_w,
        bandwidth_hz,
        max_power_w: vec![max_power_w; dims.num_bs()],
        min_rate_bps,
    }
}
