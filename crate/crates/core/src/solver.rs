//! Small dense log-barrier interior-point method for smooth concave
//! maximization over box, affine and smooth concave constraints.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// A twice-differentiable function of the decision vector.
pub trait Smooth {
    /// Value at `x`; writes the gradient into `grad` (pre-zeroed).
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Adds `scale` times the Hessian at `x` into `h`.
    fn hess(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>);
    /// Value only.
    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.eval(x, &mut g)
    }
}

/// Sparse `coeffs . x <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInequality {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearInequality {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - self.coeffs.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
    }
}

/// Sparse `coeffs . x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Maximize a concave objective subject to `g(x) >= 0` for concave `g`,
/// sparse linear inequalities and equalities, and box bounds.
pub struct ConvexProgram<'a> {
    pub dim: usize,
    pub objective: Box<dyn Smooth + 'a>,
    pub constraints: Vec<(String, Box<dyn Smooth + 'a>)>,
    pub linear: Vec<LinearInequality>,
    pub equalities: Vec<LinearEquality>,
    /// Entries may be `-inf`.
    pub lower: Vec<f64>,
    /// Entries may be `+inf`.
    pub upper: Vec<f64>,
}

impl<'a> ConvexProgram<'a> {
    pub fn new(dim: usize, objective: Box<dyn Smooth + 'a>) -> Self {
        Self {
            dim,
            objective,
            constraints: Vec::new(),
            linear: Vec::new(),
            equalities: Vec::new(),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    fn barrier_terms(&self) -> usize {
        let boxes = self.lower.iter().filter(|l| l.is_finite()).count()
            + self.upper.iter().filter(|u| u.is_finite()).count();
        self.constraints.len() + self.linear.len() + boxes
    }

    /// Name of the first constraint not strictly satisfied at `x`.
    pub fn first_violation(&self, x: &[f64]) -> Option<String> {
        for k in 0..self.dim {
            if !(x[k] > self.lower[k]) && self.lower[k].is_finite() || !x[k].is_finite() {
                return Some(format!("lower bound of x[{k}]"));
            }
            if !(x[k] < self.upper[k]) && self.upper[k].is_finite() {
                return Some(format!("upper bound of x[{k}]"));
            }
        }
        for l in &self.linear {
            if !(l.slack(x) > 0.0) {
                return Some(l.name.clone());
            }
        }
        for (name, g) in &self.constraints {
            if !(g.value(x) > 0.0) {
                return Some(name.clone());
            }
        }
        None
    }

    /// Barrier merit `t f0 + sum log(slacks)`; `None` outside the domain.
    fn merit(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.objective.value(x);
        for k in 0..self.dim {
            if self.lower[k].is_finite() {
                let s = x[k] - self.lower[k];
                if !(s > 0.0) {
                    return None;
                }
                v += s.ln();
            }
            if self.upper[k].is_finite() {
                let s = self.upper[k] - x[k];
                if !(s > 0.0) {
                    return None;
                }
                v += s.ln();
            }
        }
        for l in &self.linear {
            let s = l.slack(x);
            if !(s > 0.0) {
                return None;
            }
            v += s.ln();
        }
        for (_, g) in &self.constraints {
            let s = g.value(x);
            if !(s > 0.0) {
                return None;
            }
            v += s.ln();
        }
        v.is_finite().then_some(v)
    }

    /// Gradient and negated Hessian of the barrier merit.
    fn newton_system(&self, x: &[f64], t: f64, grad: &mut DVector<f64>, neg_h: &mut DMatrix<f64>) {
        let n = self.dim;
        grad.fill(0.0);
        neg_h.fill(0.0);
        let mut g = vec![0.0; n];
        self.objective.eval(x, &mut g);
        for k in 0..n {
            grad[k] = t * g[k];
        }
        self.objective.hess(x, -t, neg_h);

        for k in 0..n {
            if self.lower[k].is_finite() {
                let s = x[k] - self.lower[k];
                grad[k] += 1.0 / s;
                neg_h[(k, k)] += 1.0 / (s * s);
            }
            if self.upper[k].is_finite() {
                let s = self.upper[k] - x[k];
                grad[k] -= 1.0 / s;
                neg_h[(k, k)] += 1.0 / (s * s);
            }
        }
        for l in &self.linear {
            let s = l.slack(x);
            let h = neg_h.as_mut_slice();
            for &(i, ai) in &l.coeffs {
                grad[i] -= ai / s;
                let w = ai / (s * s);
                for &(j, aj) in &l.coeffs {
                    h[j * n + i] += w * aj;
                }
            }
        }
        if self.constraints.is_empty() {
            return;
        }
        // Columns g / s; their Gram matrix is the barrier's rank-one part.
        let mut jac = DMatrix::zeros(n, self.constraints.len());
        for (col, (_, c)) in self.constraints.iter().enumerate() {
            g.iter_mut().for_each(|v| *v = 0.0);
            let s = c.eval(x, &mut g);
            let mut column = jac.column_mut(col);
            for k in 0..n {
                grad[k] += g[k] / s;
                column[k] = g[k] / s;
            }
            c.hess(x, -1.0 / s, neg_h);
        }
        neg_h.gemm(1.0, &jac, &jac.transpose(), 1.0);
    }

    /// Scale-aware stationarity residual of the barrier-implied KKT point.
    fn stationarity(&self, x: &[f64], t: f64) -> f64 {
        let mut grad = DVector::zeros(self.dim);
        let mut h = DMatrix::zeros(self.dim, self.dim);
        self.newton_system(x, t, &mut grad, &mut h);
        if !self.equalities.is_empty() {
            // Remove the component in the span of the equality normals.
            let a = self.equality_matrix();
            let aat = &a * a.transpose();
            if let Some(lu) = aat.clone().lu().solve(&(&a * &grad)) {
                grad -= a.transpose() * lu;
            }
        }
        let mut g0 = vec![0.0; self.dim];
        self.objective.eval(x, &mut g0);
        let scale = g0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        grad.amax() / t / scale
    }

    fn equality_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.equalities.len(), self.dim);
        for (r, e) in self.equalities.iter().enumerate() {
            for &(k, v) in &e.coeffs {
                a[(r, k)] += v;
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// The method ended below the start value; the start is returned.
    NoProgress,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_inner_iters: usize,
    /// Barrier parameter growth per outer stage.
    pub growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { kkt_tol: 1e-6, max_inner_iters: 500, growth: 20.0 }
    }
}

/// Factorizes `m` (symmetric positive definite up to round-off) and solves
/// `m d = rhs`, regularizing the diagonal when needed.
fn spd_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let diag = (0..m.nrows()).fold(0.0f64, |a, k| a.max(m[(k, k)].abs())).max(1e-300);
    let mut delta = 0.0;
    for _ in 0..12 {
        let mut a = m.clone();
        if delta > 0.0 {
            for k in 0..a.nrows() {
                a[(k, k)] += delta;
            }
        }
        if let Some(ch) = a.cholesky() {
            let mut d = rhs.clone();
            ch.solve_mut(&mut d);
            return Some(d);
        }
        delta = if delta == 0.0 { 1e-12 * diag } else { delta * 100.0 };
    }
    None
}

fn kkt_solve(neg_h: &DMatrix<f64>, a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = neg_h.nrows();
    let p = a.nrows();
    let mut k = DMatrix::zeros(n + p, n + p);
    k.view_mut((0, 0), (n, n)).copy_from(neg_h);
    k.view_mut((n, 0), (p, n)).copy_from(a);
    k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
    let mut r = DVector::zeros(n + p);
    r.rows_mut(0, n).copy_from(rhs);
    let sol = k.lu().solve(&r)?;
    Some(sol.rows(0, n).into_owned())
}

/// Runs the barrier method from the strictly feasible `start`.
pub fn solve(program: &ConvexProgram<'_>, start: &[f64], opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    let n = program.dim;
    if start.len() != n {
        return Err(SolverError::Dimension { expected: n, got: start.len() });
    }
    if let Some(name) = program.first_violation(start) {
        return Err(SolverError::InfeasibleStart(name));
    }
    let f_start = program.objective.value(start);
    let m_terms = program.barrier_terms().max(1) as f64;
    let a_eq = program.equality_matrix();

    let mut x = start.to_vec();
    let mut t = m_terms / f_start.abs().max(1.0);
    let mut grad = DVector::zeros(n);
    let mut neg_h = DMatrix::zeros(n, n);
    let mut steps = 0;
    let mut status = SolveStatus::IterationLimit;

    'outer: loop {
        // Centering by damped Newton.
        loop {
            if steps >= opts.max_inner_iters {
                break 'outer;
            }
            program.newton_system(&x, t, &mut grad, &mut neg_h);
            let d = if program.equalities.is_empty() {
                spd_solve(&neg_h, &grad)
            } else {
                kkt_solve(&neg_h, &a_eq, &grad)
            };
            let Some(d) = d else { break 'outer };
            let decrement = grad.dot(&d);
            steps += 1;
            if !(decrement > 2e-10) {
                break;
            }
            let phi = program.merit(&x, t).expect("iterate stays interior");
            let mut step = 1.0;
            let mut trial = vec![0.0; n];
            let mut accepted = false;
            for _ in 0..60 {
                for k in 0..n {
                    trial[k] = x[k] + step * d[k];
                }
                if let Some(v) = program.merit(&trial, t) {
                    if v >= phi + 0.25 * step * decrement {
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            std::mem::swap(&mut x, &mut trial);
            if decrement * step < 1e-12 {
                break;
            }
        }
        let f = program.objective.value(&x);
        if m_terms / t <= opts.kkt_tol * f.abs().max(1.0) {
            status = SolveStatus::Converged;
            break;
        }
        t *= opts.growth;
    }

    let objective = program.objective.value(&x);
    let gap = m_terms / t / objective.abs().max(1.0);
    let kkt_residual = gap.max(program.stationarity(&x, t));
    if objective < f_start - 1e-12 {
        return Ok(SolveResult {
            x: start.to_vec(),
            objective: f_start,
            status: SolveStatus::NoProgress,
            kkt_residual,
            newton_steps: steps,
        });
    }
    Ok(SolveResult { x, objective, status, kkt_residual, newton_steps: steps })
}

/// Which original constraint a subproblem surrogate stands in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Qos,
    Backhaul,
}

/// Surrogate and original values of one constraint at a subproblem
/// solution, plus the elastic slack the solve used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubproblemCheck {
    pub kind: CheckKind,
    pub node: usize,
    pub surrogate_value: f64,
    pub original_value: f64,
    pub elastic_slack: f64,
    /// Whether the constraint held at the start of the solve.
    pub held_at_start: bool,
}

/// `-0.5 x'Qx + c'x + k` with symmetric `Q`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub k: f64,
}

impl Smooth for Quadratic {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let qx = &self.q * &xv;
        for (g, (c, q)) in grad.iter_mut().zip(self.c.iter().zip(qx.iter())) {
            *g = c - q;
        }
        -0.5 * xv.dot(&qx) + self.c.dot(&xv) + self.k
    }

    fn hess(&self, _x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        *h -= &self.q * scale;
    }
}

/// Sparse affine function `coeffs . x + constant`.
#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub coeffs: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Smooth for Affine {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut v = self.constant;
        for &(k, a) in &self.coeffs {
            v += a * x[k];
            grad[k] += a;
        }
        v
    }

    fn hess(&self, _x: &[f64], _scale: f64, _h: &mut DMatrix<f64>) {}
}

/// Central finite-difference gradient, for tests of analytic gradients.
pub fn finite_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            let hk = h * x[k].abs().max(1.0);
            p[k] = x[k] + hk;
            let up = f(&p);
            p[k] = x[k] - hk;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * hk)
        })
        .collect()
}
