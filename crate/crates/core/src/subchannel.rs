//! Subchannel allocation: each `x R` term is replaced by a concave lower
//! bound around the current point, binariness is enforced by a concave
//! penalty handled with DC iterations, and the resulting convex problems
//! are solved by the barrier method. The relaxed solution is rounded and
//! repaired to satisfy the per-subchannel constraints exactly.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::netmodel::{interferes, prospective_power, Instance, Solution};
use crate::solver::{
    solve, CheckKind, ConvexProgram, LinearInequality, Smooth, SolverOptions, SubproblemCheck,
};
use crate::topology::ScenarioConfig;

/// Interior floor keeping every relaxed entry away from 0.
pub const EPS_X: f64 = 1e-6;
/// Cost per unit (bits/s/Hz) of elastic slack on rate constraints.
pub const ELASTIC_COST: f64 = 100.0;

/// Default penalty in bit/s: ten times the rate of the strongest link.
pub fn default_penalty(inst: &Instance) -> f64 {
    10.0 * inst.bandwidth_hz * (1.0 + inst.max_snr()).log2()
}

/// The relaxed allocation problem over the links `(parent(i), i, m)`.
/// Rates are in bits/s/Hz and interference is normalized by the noise.
#[derive(Debug, Clone)]
pub struct SaModel {
    pub vars: Vec<(usize, usize, usize)>,
    /// Variable per `dims.link`.
    pub var_of: Vec<Option<usize>>,
    /// `alpha P / noise` per variable.
    pub snr: Vec<f64>,
    /// `(var', alpha_cross P' / noise)` of every interfering variable.
    pub interferers: Vec<Vec<(usize, f64)>>,
    pub ue_vars: Vec<usize>,
    /// Variables whose receiver is the node.
    pub into: Vec<Vec<usize>>,
    /// Variables whose transmitter is the BS.
    pub out: Vec<Vec<usize>>,
    /// Groups with sum at most one: one child per (BS, subchannel) and
    /// half-duplex per (SBS, subchannel).
    pub c3: Vec<Vec<usize>>,
    pub c4: Vec<Vec<usize>>,
    pub ues: Vec<usize>,
    pub sbs: Vec<usize>,
    /// Penalty in bits/s/Hz.
    pub mu: f64,
    pub min_rate: f64,
    pub bandwidth_hz: f64,
}

impl SaModel {
    /// Variables for every subchannel of the current parent link of each UE
    /// and each SBS that serves someone; powers come from `sol.p`, with
    /// unpowered pairs valued at the uniform share.
    pub fn new(inst: &Instance, sol: &Solution, penalty_bps: f64) -> Self {
        let d = inst.dims;
        let p = prospective_power(inst, &sol.p);
        let mut var_of = vec![None; d.link_len()];
        let mut vars = Vec::new();
        let mut snr = Vec::new();
        let parents = sol.parents();
        for i in d.receivers() {
            let Some(b) = parents[i] else { continue };
            if d.is_sbs(i) && !parents.contains(&Some(i)) {
                continue;
            }
            for m in 0..d.num_subchannels {
                let a = inst.gains.direct(b, i, m) * p[d.bs_sub(b, m)] / inst.noise_w;
                if a > 0.0 {
                    var_of[d.link(b, i, m)] = Some(vars.len());
                    vars.push((b, i, m));
                    snr.push(a);
                }
            }
        }
        let mut interferers = Vec::with_capacity(vars.len());
        for &(b, i, m) in &vars {
            let mut list = Vec::new();
            for (k, &(bp, ip, mp)) in vars.iter().enumerate() {
                if mp == m && interferes(b, i, bp, ip) {
                    let c = inst.gains.cross(b, bp, i, ip, m) * p[d.bs_sub(bp, m)] / inst.noise_w;
                    if c > 0.0 {
                        list.push((k, c));
                    }
                }
            }
            interferers.push(list);
        }
        let mut into = vec![Vec::new(); d.num_nodes()];
        let mut out = vec![Vec::new(); d.num_bs()];
        let mut ue_vars = Vec::new();
        for (k, &(b, i, _)) in vars.iter().enumerate() {
            into[i].push(k);
            out[b].push(k);
            if d.is_ue(i) {
                ue_vars.push(k);
            }
        }
        let mut c3 = Vec::new();
        let mut c4 = Vec::new();
        for b in d.bs() {
            for m in 0..d.num_subchannels {
                let tx: Vec<usize> = out[b].iter().copied().filter(|&k| vars[k].2 == m).collect();
                if d.is_sbs(b) {
                    let mut both = tx.clone();
                    both.extend(into[b].iter().copied().filter(|&k| vars[k].2 == m));
                    if both.len() > 1 {
                        c4.push(both);
                    }
                }
                if tx.len() > 1 {
                    c3.push(tx);
                }
            }
        }
        Self {
            vars,
            var_of,
            snr,
            interferers,
            ue_vars,
            into,
            out,
            c3,
            c4,
            ues: d.ues().collect(),
            sbs: d.sbs().collect(),
            mu: penalty_bps / inst.bandwidth_hz,
            min_rate: inst.min_rate_bps / inst.bandwidth_hz,
            bandwidth_hz: inst.bandwidth_hz,
        }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn to_vars(&self, x: &[f64], dims: &crate::topology::Dims) -> Vec<f64> {
        self.vars.iter().map(|&(b, i, m)| x[dims.link(b, i, m)]).collect()
    }

    pub fn to_full(&self, v: &[f64], dims: &crate::topology::Dims) -> Vec<f64> {
        let mut x = vec![0.0; dims.link_len()];
        for (k, &(b, i, m)) in self.vars.iter().enumerate() {
            x[dims.link(b, i, m)] = v[k];
        }
        x
    }

    /// Normalized interference `sum c x` at the receiver of variable `l`.
    pub fn interference(&self, l: usize, x: &[f64]) -> f64 {
        self.interferers[l].iter().map(|&(k, c)| c * x[k]).sum()
    }

    /// `log2(1 + SINR)` of variable `l` at allocation `x`.
    pub fn rate(&self, l: usize, x: &[f64]) -> f64 {
        (1.0 + self.snr[l] / (1.0 + self.interference(l, x))).log2()
    }

    /// Concave lower bound of `x_l R_l(x)` around `pt`.
    pub fn bound(&self, pt: &ScaExpansionPoint, l: usize, x: &[f64]) -> f64 {
        let vb = pt.x_t[l];
        let v = x[l];
        let z_ratio = (1.0 + self.interference(l, x)) / (1.0 + pt.interference[l]);
        (vb * (2.0 - vb / v) * pt.log_term[l] + vb * pt.weight[l] * (1.0 - z_ratio)) / LN_2
    }

    fn bound_grad(&self, pt: &ScaExpansionPoint, l: usize, x: &[f64], w: f64, g: &mut [f64]) {
        let vb = pt.x_t[l];
        let v = x[l];
        g[l] += w * vb * vb * pt.log_term[l] / (v * v * LN_2);
        let s = w * vb * pt.weight[l] / ((1.0 + pt.interference[l]) * LN_2);
        for &(k, c) in &self.interferers[l] {
            g[k] -= s * c;
        }
    }

    fn bound_hess(&self, pt: &ScaExpansionPoint, l: usize, x: &[f64], w: f64, h: &mut DMatrix<f64>) {
        let vb = pt.x_t[l];
        let v = x[l];
        h[(l, l)] -= w * 2.0 * vb * vb * pt.log_term[l] / (v * v * v * LN_2);
    }

    /// Sum of bounds over `members`.
    pub fn bound_sum(&self, pt: &ScaExpansionPoint, members: &[usize], x: &[f64]) -> f64 {
        members.iter().map(|&l| self.bound(pt, l, x)).sum()
    }

    pub fn bound_sum_grad(&self, pt: &ScaExpansionPoint, members: &[usize], x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for &l in members {
            self.bound_grad(pt, l, x, 1.0, &mut g);
        }
        g
    }

    /// `F(x)`: UE rate bounds minus the linear penalty part.
    pub fn f_value(&self, pt: &ScaExpansionPoint, x: &[f64]) -> f64 {
        self.bound_sum(pt, &self.ue_vars, x) - self.mu * x.iter().sum::<f64>()
    }

    /// `G(x) = -mu sum x^2`.
    pub fn g_value(&self, x: &[f64]) -> f64 {
        -self.mu * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn g_grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| -2.0 * self.mu * v).collect()
    }

    /// Backhaul bound into SBS `b`.
    pub fn fb_value(&self, pt: &ScaExpansionPoint, b: usize, x: &[f64]) -> f64 {
        self.bound_sum(pt, &self.into[b], x)
    }

    /// Served bound out of SBS `b`.
    pub fn gb_value(&self, pt: &ScaExpansionPoint, b: usize, x: &[f64]) -> f64 {
        self.bound_sum(pt, &self.out[b], x)
    }

    pub fn gb_grad(&self, pt: &ScaExpansionPoint, b: usize, x: &[f64]) -> Vec<f64> {
        self.bound_sum_grad(pt, &self.out[b], x)
    }

    /// Penalized relaxed objective `sum R̄ - mu sum (x - x^2)`.
    pub fn penalty_objective(&self, pt: &ScaExpansionPoint, x: &[f64]) -> f64 {
        self.bound_sum(pt, &self.ue_vars, x) - self.mu * x.iter().map(|v| v - v * v).sum::<f64>()
    }

    /// Penalized objective with exact rates, minus the elastic cost of
    /// rate-constraint violations.
    pub fn merit(&self, x: &[f64]) -> f64 {
        let xr: Vec<f64> = (0..self.dim()).map(|l| x[l] * self.rate(l, x)).collect();
        let mut obj: f64 = self.ue_vars.iter().map(|&l| xr[l]).sum();
        obj -= self.mu * x.iter().map(|v| v - v * v).sum::<f64>();
        let mut viol = 0.0;
        for &i in &self.ues {
            let r: f64 = self.into[i].iter().map(|&l| xr[l]).sum();
            viol += (self.min_rate - r).max(0.0);
        }
        for &b in &self.sbs {
            let back: f64 = self.into[b].iter().map(|&l| xr[l]).sum();
            let served: f64 = self.out[b].iter().map(|&l| xr[l]).sum();
            viol += (served - back).max(0.0);
        }
        obj - ELASTIC_COST * viol
    }

    /// Strictly interior start: the incumbent blended with a fair share
    /// that keeps every grouped sum below one.
    pub fn start_point(&self, incumbent: &[f64], blend: f64) -> Vec<f64> {
        let mut load = vec![1usize; self.dim()];
        for group in self.c3.iter().chain(&self.c4) {
            for &k in group {
                load[k] = load[k].max(group.len());
            }
        }
        (0..self.dim())
            .map(|k| {
                let share = 1.0 / (load[k] as f64 + 1.0);
                let inc = incumbent[k].clamp(0.0, 1.0);
                let v = (1.0 - blend) * inc + blend * share;
                // Keep strictly inside (EPS_X, 1) and every group sum < 1.
                v.clamp(2.0 * EPS_X, 1.0 - 1e-3) * (1.0 - 1e-3) + 0.5e-3 * share
            })
            .collect()
    }
}

/// Anchor of the lower bound: the allocation and its cached terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaExpansionPoint {
    pub x_t: Vec<f64>,
    /// Normalized interference per variable at `x_t`.
    pub interference: Vec<f64>,
    /// `ln(1 + SINR)` at `x_t`.
    pub log_term: Vec<f64>,
    /// `SINR / (1 + SINR)` at `x_t`.
    pub weight: Vec<f64>,
}

impl ScaExpansionPoint {
    pub fn new(model: &SaModel, x_t: &[f64]) -> Self {
        let n = model.dim();
        let mut interference = Vec::with_capacity(n);
        let mut log_term = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        for l in 0..n {
            let i = model.interference(l, x_t);
            let g = model.snr[l] / (1.0 + i);
            interference.push(i);
            log_term.push(g.ln_1p());
            weight.push(g / (1.0 + g));
        }
        Self { x_t: x_t.to_vec(), interference, log_term, weight }
    }
}

/// `sum of bounds over members + affine`, concave in the variables.
struct BoundAffine<'m> {
    model: &'m SaModel,
    pt: &'m ScaExpansionPoint,
    members: Vec<usize>,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

impl Smooth for BoundAffine<'_> {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = self.constant;
        for &l in &self.members {
            v += self.model.bound(self.pt, l, x);
            self.model.bound_grad(self.pt, l, x, 1.0, grad);
        }
        for &(k, a) in &self.linear {
            v += a * x[k];
            grad[k] += a;
        }
        v
    }

    fn hess(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        for &l in &self.members {
            self.model.bound_hess(self.pt, l, x, scale, h);
        }
    }
}

/// Result of one convex allocation subproblem.
#[derive(Debug, Clone)]
pub struct SaSolve {
    pub x: Vec<f64>,
    pub surrogate_objective: f64,
    pub kkt_residual: f64,
    pub checks: Vec<SubproblemCheck>,
}

/// Solves the convex subproblem around `pt`, starting from `pt.x_t`.
pub fn solve_sa_subproblem(model: &SaModel, pt: &ScaExpansionPoint, opts: &SolverOptions) -> Option<SaSolve> {
    let n = model.dim();
    let qos = model.ues.clone();
    let n_slack = qos.len() + model.sbs.len();
    let dim = n + n_slack;
    let x_t = &pt.x_t;

    let mut start = vec![0.0; dim];
    start[..n].copy_from_slice(x_t);

    // F - Ḡ: bounds of UE links, linear part -mu x + 2 mu x_t x, constant.
    let mut linear: Vec<(usize, f64)> = (0..n).map(|k| (k, model.mu * (2.0 * x_t[k] - 1.0))).collect();
    linear.extend((n..dim).map(|k| (k, -ELASTIC_COST)));
    let constant = -model.mu * x_t.iter().map(|v| v * v).sum::<f64>();
    let objective = BoundAffine { model, pt, members: model.ue_vars.clone(), linear, constant };
    let mut program = ConvexProgram::new(dim, Box::new(objective));

    let mut kinds = Vec::new();
    for (s, &i) in qos.iter().enumerate() {
        let c = BoundAffine {
            model,
            pt,
            members: model.into[i].clone(),
            linear: vec![(n + s, 1.0)],
            constant: -model.min_rate,
        };
        let g0 = model.bound_sum(pt, &model.into[i], x_t) - model.min_rate;
        start[n + s] = (-g0).max(0.0) + 1e-6;
        kinds.push((CheckKind::Qos, i, g0 >= 0.0));
        program.constraints.push((format!("qos[{i}]"), Box::new(c)));
    }
    for (s, &b) in model.sbs.iter().enumerate() {
        let slot = n + qos.len() + s;
        let g_t = model.gb_value(pt, b, x_t);
        let grad = model.gb_grad(pt, b, x_t);
        let mut lin: Vec<(usize, f64)> = Vec::new();
        let mut constant = -g_t;
        for k in 0..n {
            if grad[k] != 0.0 {
                lin.push((k, -grad[k]));
                constant += grad[k] * x_t[k];
            }
        }
        lin.push((slot, 1.0));
        let g0 = model.fb_value(pt, b, x_t) - g_t;
        start[slot] = (-g0).max(0.0) + 1e-6;
        kinds.push((CheckKind::Backhaul, b, g0 >= 0.0));
        let c = BoundAffine { model, pt, members: model.into[b].clone(), linear: lin, constant };
        program.constraints.push((format!("backhaul[{b}]"), Box::new(c)));
    }
    for (tag, groups) in [("c3", &model.c3), ("c4", &model.c4)] {
        for (g, group) in groups.iter().enumerate() {
            program.linear.push(LinearInequality {
                name: format!("{tag}[{g}]"),
                coeffs: group.iter().map(|&k| (k, 1.0)).collect(),
                rhs: 1.0,
            });
        }
    }
    program.lower = vec![EPS_X; n];
    program.lower.extend(std::iter::repeat(0.0).take(n_slack));
    program.upper = vec![1.0; n];
    program.upper.extend(std::iter::repeat(f64::INFINITY).take(n_slack));

    let res = solve(&program, &start, opts).ok()?;
    let x = res.x[..n].to_vec();
    let mut checks = Vec::new();
    for (s, (kind, node, held)) in kinds.into_iter().enumerate() {
        let slack = res.x[n + s];
        let (surrogate_value, original_value) = match kind {
            CheckKind::Qos => {
                let sur = model.bound_sum(pt, &model.into[node], &x) - model.min_rate;
                let exact: f64 = model.into[node].iter().map(|&l| x[l] * model.rate(l, &x)).sum();
                (sur, exact - model.min_rate)
            }
            CheckKind::Backhaul => {
                let g_bar = model.gb_value(pt, node, x_t)
                    + model.gb_grad(pt, node, x_t).iter().zip(x.iter().zip(x_t)).map(|(g, (a, b))| g * (a - b)).sum::<f64>();
                let f = model.fb_value(pt, node, &x);
                (f - g_bar, f - model.gb_value(pt, node, &x))
            }
        };
        checks.push(SubproblemCheck {
            kind,
            node,
            surrogate_value,
            original_value,
            elastic_slack: slack,
            held_at_start: held,
        });
    }
    Some(SaSolve { x, surrogate_objective: res.objective, kkt_residual: res.kkt_residual, checks })
}

/// Thresholds at one half, then drops the weakest entry of every group
/// that still sums above one.
pub fn round_and_repair(model: &SaModel, relaxed: &[f64]) -> Vec<f64> {
    let score: Vec<f64> = (0..model.dim()).map(|l| relaxed[l] * model.rate(l, relaxed)).collect();
    let mut x: Vec<f64> = relaxed.iter().map(|&v| if v >= 0.5 { 1.0 } else { 0.0 }).collect();
    for group in model.c3.iter().chain(&model.c4) {
        loop {
            let on: Vec<usize> = group.iter().copied().filter(|&k| x[k] > 0.5).collect();
            if on.len() <= 1 {
                break;
            }
            let weakest = on
                .iter()
                .copied()
                .min_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)))
                .expect("nonempty");
            x[weakest] = 0.0;
        }
    }
    x
}

/// Largest distance of any entry to `{0, 1}`.
pub fn max_fractionality(x: &[f64]) -> f64 {
    x.iter().map(|&v| v.abs().min((1.0 - v).abs())).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTraceRow {
    pub iter: usize,
    pub surrogate_objective: f64,
    /// Penalized objective with exact rates and elastic costs, bits/s/Hz.
    pub true_objective: f64,
    pub max_fractionality: f64,
}

#[derive(Debug, Clone)]
pub struct SaOutcome {
    /// Binary allocation indexed by `dims.link`.
    pub x: Vec<f64>,
    /// Final relaxed allocation indexed by `dims.link`.
    pub relaxed: Vec<f64>,
    pub trace: Vec<SaTraceRow>,
    pub checks: Vec<SubproblemCheck>,
    pub max_fractionality: f64,
}

/// DC iterations from the blended start, then rounding and repair. `y`
/// and `P` come from `sol`; `penalty_bps` overrides the configured one.
pub fn run_sa_with_penalty(inst: &Instance, sol: &Solution, config: &ScenarioConfig, penalty_bps: f64) -> SaOutcome {
    let d = inst.dims;
    let model = SaModel::new(inst, sol, penalty_bps);
    let opts = SolverOptions { kkt_tol: config.kkt_tol, max_inner_iters: config.max_inner_iters, ..Default::default() };
    let incumbent = model.to_vars(&sol.x, &d);
    let mut x = model.start_point(&incumbent, config.sa_start_blend);
    let mut merit = model.merit(&x);
    let mut trace = vec![SaTraceRow {
        iter: 0,
        surrogate_objective: merit,
        true_objective: merit,
        max_fractionality: max_fractionality(&x),
    }];
    let mut checks = Vec::new();
    if model.dim() > 0 {
        for iter in 1..=config.max_sa_iters {
            let pt = ScaExpansionPoint::new(&model, &x);
            let Some(res) = solve_sa_subproblem(&model, &pt, &opts) else { break };
            checks.extend(res.checks);
            let next_merit = model.merit(&res.x);
            if !(next_merit >= merit) {
                break;
            }
            let change = (next_merit - merit) / merit.abs().max(1e-12);
            x = res.x;
            merit = next_merit;
            trace.push(SaTraceRow {
                iter,
                surrogate_objective: res.surrogate_objective,
                true_objective: merit,
                max_fractionality: max_fractionality(&x),
            });
            if change < config.conv_tol {
                break;
            }
        }
    }
    let binary = round_and_repair(&model, &x);
    SaOutcome {
        x: model.to_full(&binary, &d),
        relaxed: model.to_full(&x, &d),
        trace,
        checks,
        max_fractionality: max_fractionality(&x),
    }
}

/// Penalty in bit/s from the config, or [`default_penalty`].
pub fn penalty_for(inst: &Instance, config: &ScenarioConfig) -> f64 {
    config.penalty_factor.unwrap_or_else(|| default_penalty(inst))
}

pub fn run_sa(inst: &Instance, sol: &Solution, config: &ScenarioConfig) -> SaOutcome {
    run_sa_with_penalty(inst, sol, config, penalty_for(inst, config))
}
