//! Power allocation by difference-of-concave iterations: each rate term is
//! split as `e - q` with both pieces concave in the powers, the subtracted
//! aggregates are linearized, and the convex subproblem is solved by the
//! barrier method.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::netmodel::{interference, interferes, sum_rate, Instance, Solution};
use crate::solver::{
    solve, CheckKind, ConvexProgram, LinearInequality, Smooth, SolverOptions, SubproblemCheck,
};
use crate::topology::ScenarioConfig;

/// Cost per unit (bits/s/Hz) of elastic slack on rate constraints.
pub const ELASTIC_COST: f64 = 100.0;

/// Literal `(e, q)` of link (b, i, m) at powers `p` (watts).
pub fn dc_pieces(inst: &Instance, sol: &Solution, p: &[f64], b: usize, i: usize, m: usize) -> (f64, f64) {
    let gate = sol.y(b, i) * sol.x(b, i, m);
    if gate == 0.0 {
        return (0.0, 0.0);
    }
    let interf = interference(inst, &sol.x, p, b, i, m) + inst.noise_w;
    let signal = inst.gains.direct(b, i, m) * p[inst.dims.bs_sub(b, m)];
    (gate * (signal + interf).log2(), gate * interf.log2())
}

/// A scheduled link with its noise-normalized affine arguments.
#[derive(Debug, Clone)]
pub struct PaLink {
    pub b: usize,
    pub i: usize,
    pub m: usize,
    pub gate: f64,
    /// Coefficients of `1 + sum c p` for the interference-plus-noise term.
    pub q_coeffs: Vec<(usize, f64)>,
    /// Same plus the own-signal coefficient.
    pub e_coeffs: Vec<(usize, f64)>,
}

/// Members of an aggregate: `(link, is_e)` pairs summed with unit weight.
pub type Members = Vec<(usize, bool)>;

/// The power subproblem in normalized variables `v = P / P_max` over the
/// (b, m) pairs that carry a scheduled link. Rates are in bits/s/Hz.
#[derive(Debug, Clone)]
pub struct PaModel {
    pub links: Vec<PaLink>,
    /// `(b, m)` of each variable.
    pub vars: Vec<(usize, usize)>,
    /// Variable index per `dims.bs_sub`.
    pub var_of: Vec<Option<usize>>,
    pub max_power_w: Vec<f64>,
    pub log2_noise: f64,
    pub min_rate: f64,
    pub ue_in: Vec<Members>,
    pub total: Members,
    pub ues: Vec<usize>,
    pub sbs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    E,
    Q,
    Ei(usize),
    Qi(usize),
    H1(usize),
    H2(usize),
}

impl PaModel {
    pub fn new(inst: &Instance, sol: &Solution) -> Self {
        let d = inst.dims;
        let mut var_of = vec![None; d.power_len()];
        let mut vars = Vec::new();
        let mut scheduled = Vec::new();
        for b in d.bs() {
            for i in d.receivers() {
                if i == b {
                    continue;
                }
                for m in 0..d.num_subchannels {
                    let gate = sol.y(b, i) * sol.x(b, i, m);
                    if gate > 0.0 {
                        scheduled.push((b, i, m, gate));
                        let k = d.bs_sub(b, m);
                        if var_of[k].is_none() {
                            var_of[k] = Some(vars.len());
                            vars.push((b, m));
                        }
                    }
                }
            }
        }
        let mut links = Vec::with_capacity(scheduled.len());
        for &(b, i, m, gate) in &scheduled {
            let mut q_coeffs: Vec<(usize, f64)> = Vec::new();
            for &(bp, ip, mp, _) in &scheduled {
                if mp != m || !interferes(b, i, bp, ip) {
                    continue;
                }
                let var = var_of[d.bs_sub(bp, m)].expect("scheduled");
                let c = sol.x(bp, ip, m) * inst.gains.cross(b, bp, i, ip, m) * inst.max_power_w[bp] / inst.noise_w;
                if c == 0.0 {
                    continue;
                }
                match q_coeffs.iter_mut().find(|(k, _)| *k == var) {
                    Some(e) => e.1 += c,
                    None => q_coeffs.push((var, c)),
                }
            }
            let own = var_of[d.bs_sub(b, m)].expect("scheduled");
            let a = inst.gains.direct(b, i, m) * inst.max_power_w[b] / inst.noise_w;
            let mut e_coeffs = q_coeffs.clone();
            match e_coeffs.iter_mut().find(|(k, _)| *k == own) {
                Some(e) => e.1 += a,
                None => e_coeffs.push((own, a)),
            }
            links.push(PaLink { b, i, m, gate, q_coeffs, e_coeffs });
        }
        let mut ue_in = vec![Vec::new(); d.num_nodes()];
        let mut total = Vec::new();
        for (l, link) in links.iter().enumerate() {
            if d.is_ue(link.i) {
                ue_in[link.i].push((l, true));
                total.push((l, true));
            }
        }
        Self {
            links,
            vars,
            var_of,
            max_power_w: inst.max_power_w.clone(),
            log2_noise: inst.noise_w.log2(),
            min_rate: inst.min_rate_bps / inst.bandwidth_hz,
            ue_in,
            total,
            ues: d.ues().collect(),
            sbs: d.sbs().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn to_vars(&self, p: &[f64], dims: &crate::topology::Dims) -> Vec<f64> {
        self.vars
            .iter()
            .map(|&(b, m)| p[dims.bs_sub(b, m)] / self.max_power_w[b])
            .collect()
    }

    /// Full power vector in watts; pairs without a variable get 0.
    pub fn to_watts(&self, v: &[f64], dims: &crate::topology::Dims) -> Vec<f64> {
        let mut p = vec![0.0; dims.power_len()];
        for (k, &(b, m)) in self.vars.iter().enumerate() {
            p[dims.bs_sub(b, m)] = v[k].max(0.0) * self.max_power_w[b];
        }
        p
    }

    fn arg(&self, l: usize, is_e: bool, v: &[f64]) -> f64 {
        let c = if is_e { &self.links[l].e_coeffs } else { &self.links[l].q_coeffs };
        1.0 + c.iter().map(|&(k, a)| a * v[k]).sum::<f64>()
    }

    /// Noise-normalized `log2` term of one member.
    fn term(&self, l: usize, is_e: bool, v: &[f64]) -> f64 {
        self.links[l].gate * self.arg(l, is_e, v).log2()
    }

    /// Literal `e` or `q` of link `l`, including the `log2(noise)` offset.
    pub fn piece(&self, l: usize, is_e: bool, v: &[f64]) -> f64 {
        self.term(l, is_e, v) + self.links[l].gate * self.log2_noise
    }

    pub fn members(&self, a: Aggregate) -> Members {
        let pick = |f: &dyn Fn(&PaLink) -> bool, is_e: bool| -> Members {
            self.links
                .iter()
                .enumerate()
                .filter(|(_, l)| f(l))
                .map(|(k, _)| (k, is_e))
                .collect()
        };
        match a {
            Aggregate::E => self.total.clone(),
            Aggregate::Q => self.total.iter().map(|&(l, _)| (l, false)).collect(),
            Aggregate::Ei(i) => self.ue_in[i].clone(),
            Aggregate::Qi(i) => self.ue_in[i].iter().map(|&(l, _)| (l, false)).collect(),
            Aggregate::H1(b) => {
                let mut v = pick(&|l| l.i == b, true);
                v.extend(pick(&|l| l.b == b, false));
                v
            }
            Aggregate::H2(b) => {
                let mut v = pick(&|l| l.i == b, false);
                v.extend(pick(&|l| l.b == b, true));
                v
            }
        }
    }

    /// Literal value of an aggregate.
    pub fn aggregate(&self, a: Aggregate, v: &[f64]) -> f64 {
        self.members(a).iter().map(|&(l, e)| self.piece(l, e, v)).sum()
    }

    /// Gradient of an aggregate with respect to the variables.
    pub fn aggregate_grad(&self, a: Aggregate, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for (l, e) in self.members(a) {
            add_log_grad(self, l, e, v, 1.0, &mut g);
        }
        g
    }

    /// Per-UE normalized rates `E_i - Q_i`.
    pub fn ue_rate(&self, i: usize, v: &[f64]) -> f64 {
        self.ue_in[i].iter().map(|&(l, _)| self.term(l, true, v) - self.term(l, false, v)).sum()
    }

    /// `h1 - h2` for SBS `b`.
    pub fn backhaul_slack(&self, b: usize, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (l, link) in self.links.iter().enumerate() {
            let r = self.term(l, true, v) - self.term(l, false, v);
            if link.i == b {
                s += r;
            }
            if link.b == b {
                s -= r;
            }
        }
        s
    }

    /// Objective `E - Q` in bits/s/Hz.
    pub fn objective(&self, v: &[f64]) -> f64 {
        self.total.iter().map(|&(l, _)| self.term(l, true, v) - self.term(l, false, v)).sum()
    }

    /// Objective minus the elastic cost of every rate-constraint violation.
    pub fn merit(&self, v: &[f64]) -> f64 {
        let mut viol = 0.0;
        for &i in &self.ues {
            viol += (self.min_rate - self.ue_rate(i, v)).max(0.0);
        }
        for &b in &self.sbs {
            viol += (-self.backhaul_slack(b, v)).max(0.0);
        }
        self.objective(v) - ELASTIC_COST * viol
    }
}

fn add_log_grad(model: &PaModel, l: usize, is_e: bool, v: &[f64], w: f64, g: &mut [f64]) {
    let link = &model.links[l];
    let c = if is_e { &link.e_coeffs } else { &link.q_coeffs };
    let s = w * link.gate / (model.arg(l, is_e, v) * LN_2);
    for &(k, a) in c {
        g[k] += s * a;
    }
}

fn add_log_hess(model: &PaModel, l: usize, is_e: bool, v: &[f64], w: f64, h: &mut DMatrix<f64>) {
    let link = &model.links[l];
    let c = if is_e { &link.e_coeffs } else { &link.q_coeffs };
    let u = model.arg(l, is_e, v);
    let s = -w * link.gate / (u * u * LN_2);
    for &(i, ai) in c {
        for &(j, aj) in c {
            h[(i, j)] += s * ai * aj;
        }
    }
}

/// `sum of log members + affine`, concave in the variables.
struct LogAffine<'m> {
    model: &'m PaModel,
    members: Members,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

impl Smooth for LogAffine<'_> {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = self.constant;
        for &(l, e) in &self.members {
            v += self.model.term(l, e, x);
            add_log_grad(self.model, l, e, x, 1.0, grad);
        }
        for &(k, a) in &self.linear {
            v += a * x[k];
            grad[k] += a;
        }
        v
    }

    fn hess(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        for &(l, e) in &self.members {
            add_log_hess(self.model, l, e, x, scale, h);
        }
    }
}

/// First-order expansion of an aggregate's noise-normalized sum at `v_t`:
/// returns `(value, gradient)` so the surrogate is `value + grad.(v - v_t)`.
fn linearize(model: &PaModel, members: &Members, v_t: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; model.dim()];
    let mut val = 0.0;
    for &(l, e) in members {
        val += model.term(l, e, v_t);
        add_log_grad(model, l, e, v_t, 1.0, &mut g);
    }
    (val, g)
}

/// Affine surrogates `Q̄`, `Q̄_i`, `h̄2_b` at `v_t`, as literal-valued
/// closures over arbitrary points.
pub fn linearize_pa(model: &PaModel, a: Aggregate, v_t: &[f64]) -> impl Fn(&[f64]) -> f64 {
    let members = model.members(a);
    let offset: f64 = members.iter().map(|&(l, _)| model.links[l].gate * model.log2_noise).sum();
    let (val, g) = linearize(model, &members, v_t);
    let anchor = v_t.to_vec();
    move |v: &[f64]| val + offset + g.iter().zip(v.iter().zip(&anchor)).map(|(g, (x, x0))| g * (x - x0)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaTraceRow {
    pub iter: usize,
    /// Elastic merit in bps; equals the sum rate when all rate constraints hold.
    pub objective: f64,
    pub sum_rate: f64,
    pub kkt_residual: f64,
    /// Largest backhaul shortfall `max_b (h2 - h1)` in bps, 0 if none.
    pub max_c2_violation: f64,
}

#[derive(Debug, Clone)]
pub struct PaOutcome {
    /// Powers in watts, indexed by `dims.bs_sub`.
    pub p: Vec<f64>,
    pub trace: Vec<PaTraceRow>,
    pub checks: Vec<SubproblemCheck>,
}

/// Builds and solves one convex power subproblem around `v_t`. Returns the
/// new point, the solver KKT residual, and the per-constraint checks.
pub fn solve_pa_subproblem(
    model: &PaModel,
    v_t: &[f64],
    opts: &SolverOptions,
) -> Option<(Vec<f64>, f64, Vec<SubproblemCheck>)> {
    let n = model.dim();
    let qos: Vec<usize> = model.ues.iter().copied().filter(|&i| !model.ue_in[i].is_empty() || model.min_rate > 0.0).collect();
    let sbs = model.sbs.clone();
    let n_slack = qos.len() + sbs.len();
    let dim = n + n_slack;

    // Strictly interior start: shrink towards a uniform share per BS.
    let mut start = vec![0.0; dim];
    let mut count = vec![0usize; model.max_power_w.len()];
    for &(b, _) in &model.vars {
        count[b] += 1;
    }
    for (k, &(b, _)) in model.vars.iter().enumerate() {
        start[k] = 0.98 * v_t[k].clamp(0.0, 1.0) + 0.01 / count[b] as f64;
    }

    let mut linear_obj = Vec::new();
    let mut constant = 0.0;
    {
        let (val, g) = linearize(model, &model.members(Aggregate::Q), v_t);
        constant -= val;
        for k in 0..n {
            constant += g[k] * v_t[k];
            if g[k] != 0.0 {
                linear_obj.push((k, -g[k]));
            }
        }
    }
    for s in 0..n_slack {
        linear_obj.push((n + s, -ELASTIC_COST));
    }
    let objective = LogAffine { model, members: model.members(Aggregate::E), linear: linear_obj, constant };
    let mut program = ConvexProgram::new(dim, Box::new(objective));

    let mut surrogate_parts = Vec::new();
    let build = |plus: Aggregate, minus: Aggregate, rhs: f64, slack_var: usize| {
        let (val, g) = linearize(model, &model.members(minus), v_t);
        let mut linear = Vec::new();
        let mut constant = -val - rhs;
        for k in 0..n {
            constant += g[k] * v_t[k];
            if g[k] != 0.0 {
                linear.push((k, -g[k]));
            }
        }
        linear.push((slack_var, 1.0));
        LogAffine { model, members: model.members(plus), linear, constant }
    };
    for (s, &i) in qos.iter().enumerate() {
        let c = build(Aggregate::Ei(i), Aggregate::Qi(i), model.min_rate, n + s);
        let g0 = {
            let mut z = start.clone();
            z[n + s] = 0.0;
            c.value(&z)
        };
        start[n + s] = (-g0).max(0.0) + 1e-3;
        surrogate_parts.push((CheckKind::Qos, i, g0 >= 0.0));
        program.constraints.push((format!("qos[{i}]"), Box::new(c)));
    }
    for (s, &b) in sbs.iter().enumerate() {
        let slot = n + qos.len() + s;
        let c = build(Aggregate::H1(b), Aggregate::H2(b), 0.0, slot);
        let g0 = {
            let mut z = start.clone();
            z[slot] = 0.0;
            c.value(&z)
        };
        start[slot] = (-g0).max(0.0) + 1e-3;
        surrogate_parts.push((CheckKind::Backhaul, b, g0 >= 0.0));
        program.constraints.push((format!("backhaul[{b}]"), Box::new(c)));
    }

    let nb = model.max_power_w.len();
    for b in 0..nb {
        let coeffs: Vec<(usize, f64)> =
            model.vars.iter().enumerate().filter(|(_, &(bb, _))| bb == b).map(|(k, _)| (k, 1.0)).collect();
        if !coeffs.is_empty() {
            program.linear.push(LinearInequality { name: format!("budget[{b}]"), coeffs, rhs: 1.0 });
        }
    }
    program.lower = vec![0.0; dim];

    let res = solve(&program, &start, opts).ok()?;
    let x = res.x;
    let v = x[..n].to_vec();
    let mut checks = Vec::new();
    for (s, (kind, node, held)) in surrogate_parts.into_iter().enumerate() {
        let slack = x[n + s];
        let (surrogate_value, original_value) = match kind {
            CheckKind::Qos => {
                let sur = model.aggregate(Aggregate::Ei(node), &v) - linearize_pa(model, Aggregate::Qi(node), v_t)(&v);
                (sur - model.min_rate, model.ue_rate(node, &v) - model.min_rate)
            }
            CheckKind::Backhaul => {
                let sur = model.aggregate(Aggregate::H1(node), &v) - linearize_pa(model, Aggregate::H2(node), v_t)(&v);
                (sur, model.backhaul_slack(node, &v))
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
    Some((v, res.kkt_residual, checks))
}

/// Iterates linearize-and-solve from the powers in `sol`, keeping `y`
/// and `x` fixed.
pub fn run_pa(inst: &Instance, sol: &Solution, config: &ScenarioConfig) -> PaOutcome {
    let d = inst.dims;
    let model = PaModel::new(inst, sol);
    let opts = SolverOptions { kkt_tol: config.kkt_tol, max_inner_iters: config.max_inner_iters, ..Default::default() };
    let w = inst.bandwidth_hz;
    let mut v = model.to_vars(&sol.p, &d);
    if v.iter().all(|&z| z == 0.0) && !v.is_empty() {
        let mut count = vec![0usize; d.num_bs()];
        for &(b, _) in &model.vars {
            count[b] += 1;
        }
        for (k, &(b, _)) in model.vars.iter().enumerate() {
            v[k] = 1.0 / count[b] as f64;
        }
    }
    let row = |iter: usize, v: &[f64], kkt: f64| {
        let mut trial = sol.clone();
        trial.p = model.to_watts(v, &d);
        let worst = model.sbs.iter().map(|&b| (-model.backhaul_slack(b, v)).max(0.0)).fold(0.0, f64::max);
        PaTraceRow {
            iter,
            objective: w * model.merit(v),
            sum_rate: sum_rate(inst, &trial),
            kkt_residual: kkt,
            max_c2_violation: w * worst,
        }
    };
    let mut trace = vec![row(0, &v, 0.0)];
    let mut checks = Vec::new();
    if model.dim() > 0 {
        let mut merit = model.merit(&v);
        for iter in 1..=config.max_pa_iters {
            let Some((next, kkt, c)) = solve_pa_subproblem(&model, &v, &opts) else { break };
            checks.extend(c);
            let next_merit = model.merit(&next);
            if !(next_merit >= merit) {
                break;
            }
            let change = (next_merit - merit) / merit.abs().max(1e-12);
            v = next;
            merit = next_merit;
            trace.push(row(iter, &v, kkt));
            if change < config.conv_tol {
                break;
            }
        }
    }
    PaOutcome { p: model.to_watts(&v, &d), trace, checks }
}
