//! Convex kernels: closed-form linear minimization over a single ellipsoid, a
//! log-barrier solver with certified dual bounds for intersections inside a
//! box, and feasibility certification used to prune empty disjuncts.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::la;
use crate::model::{BoxBounds, Disjunct, QForm, QuadConstraint};

const EMPTY_TOL: f64 = 1e-12;
const INTERIOR_TOL: f64 = 1e-6;
const EMPTY_CERT_TOL: f64 = 1e-7;
const PHASE1_GAP: f64 = 1e-8;
const THIN_MARGIN: f64 = 5e-8;
const MIN_HALF_WIDTH: f64 = 5e-7;
const ALPHA_MIN: f64 = 1e-14;
const OUTER_CAP: usize = 60;

/// Numerical knobs for the barrier solver. Defaults certify bounds to about
/// 1e-7 relative on instance scales up to 1e5.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Slack allowed when declaring a point feasible.
    pub feas_tol: f64,
    /// Target relative duality gap of the barrier solve.
    pub gap_tol: f64,
    /// Initial barrier parameter.
    pub t0: f64,
    /// Barrier parameter growth factor per outer iteration.
    pub mu: f64,
    /// Backtracking shrink factor.
    pub armijo_shrink: f64,
    /// Required decrease fraction in the line search.
    pub armijo_slope: f64,
    /// Total Newton steps allowed per solve (both phases).
    pub newton_budget: usize,
    /// Newton decrement threshold, stop when decrement^2 / 2 falls below.
    pub newton_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-7,
            gap_tol: 1e-7,
            t0: 1.0,
            mu: 10.0,
            armijo_shrink: 0.5,
            armijo_slope: 0.01,
            newton_budget: 500,
            newton_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelStatus {
    /// Converged with the requested certified gap.
    Optimal,
    /// Newton budget exhausted; `value - gap` is still a valid bound.
    IterationLimit,
    /// The feasible set is certified empty; `value` is +inf.
    Infeasible,
}

/// Outcome of a linear minimization over a convex set.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Objective at `argmin` (primal estimate, may sit a hair above the true
    /// minimum, never more than `gap` above the certified bound).
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Certified slack: `value - gap` is a proven lower bound on the true
    /// minimum. Infinite when no certificate could be produced.
    pub gap: f64,
    /// Max of primal violation and relative stationarity residual.
    pub kkt_residual: f64,
    pub status: KernelStatus,
}

impl SolveResult {
    /// Proven lower bound on the true minimum.
    pub fn bound(&self) -> f64 {
        if self.status == KernelStatus::Infeasible {
            f64::INFINITY
        } else {
            self.value - self.gap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// A point satisfying every constraint within `feas_tol`.
    Feasible(Vec<f64>),
    /// Certified empty by a dual bound on the minimal slack.
    Empty,
    /// Could not certify either way within the budget.
    Unknown,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("objective is unbounded: no constraints and no box")]
    Unbounded,
    #[error("disjunction has no disjuncts")]
    NoDisjuncts,
    #[error("Q is not positive definite")]
    NotPd,
}

/// Center and squared radius of an ellipsoid constraint: the set
/// {x : (x-center)' Q (x-center) <= radius_sq}. Negative `radius_sq` means
/// the set is empty. `None` when Q is not positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidGeometry {
    pub center: Vec<f64>,
    pub radius_sq: f64,
}

pub fn ellipsoid_geometry(con: &QuadConstraint) -> Option<EllipsoidGeometry> {
    let half_b: Vec<f64> = con.b.iter().map(|bi| 0.5 * bi).collect();
    let qinv_half_b = con.q.solve(&half_b)?;
    let center: Vec<f64> = qinv_half_b.iter().map(|x| -x).collect();
    let radius_sq = la::dot(&half_b, &qinv_half_b) - con.gamma;
    Some(EllipsoidGeometry { center, radius_sq })
}

fn infeasible_result(n: usize) -> SolveResult {
    SolveResult {
        value: f64::INFINITY,
        argmin: vec![0.0; n],
        gap: 0.0,
        kkt_residual: 0.0,
        status: KernelStatus::Infeasible,
    }
}

/// Minimizes lambda' v over a single ellipsoid, in closed form.
pub fn linmin_single(
    lambda: &[f64],
    con: &QuadConstraint,
    _cfg: &SolverConfig,
) -> Result<SolveResult, KernelError> {
    let n = lambda.len();
    let geo = ellipsoid_geometry(con).ok_or(KernelError::NotPd)?;
    if geo.radius_sq < -EMPTY_TOL {
        return Ok(infeasible_result(n));
    }
    let s = geo.radius_sq.max(0.0);
    let w = con.q.solve(lambda).ok_or(KernelError::NotPd)?;
    let q = la::dot(lambda, &w);
    let base = la::dot(lambda, &geo.center);
    let (value, argmin, u) = if s * q <= 0.0 {
        // Point ellipsoid or zero objective: the center attains the minimum.
        (base, geo.center.clone(), None)
    } else {
        let scale = (s / q).sqrt();
        let argmin: Vec<f64> = geo
            .center
            .iter()
            .zip(&w)
            .map(|(ci, wi)| ci - scale * wi)
            .collect();
        (base - (s * q).sqrt(), argmin, Some(0.5 * (q / s).sqrt()))
    };
    let viol = con.g(&argmin).max(0.0);
    let stat = match u {
        Some(u) => {
            let grad = con.grad(&argmin);
            let mut st = lambda.to_vec();
            la::axpy(&mut st, u, &grad);
            la::norm_inf(&st) / (1.0 + la::norm_inf(lambda))
        }
        None => 0.0,
    };
    Ok(SolveResult {
        value,
        argmin,
        gap: 0.0,
        kkt_residual: viol.max(stat),
        status: KernelStatus::Optimal,
    })
}

/// Minimizes lambda' v over a box, in closed form.
pub(crate) fn linmin_box(lambda: &[f64], bb: &BoxBounds) -> SolveResult {
    let mut value = 0.0;
    let mut argmin = Vec::with_capacity(lambda.len());
    for ((li, hi), ci) in bb.lo.iter().zip(&bb.hi).zip(lambda) {
        let x = if *ci > 0.0 {
            *li
        } else if *ci < 0.0 {
            *hi
        } else {
            0.5 * (li + hi)
        };
        value += ci * x;
        argmin.push(x);
    }
    SolveResult {
        value,
        argmin,
        gap: 0.0,
        kkt_residual: 0.0,
        status: KernelStatus::Optimal,
    }
}

// Barrier machinery. Row layout of slack vectors: quadratic rows first, then
// per coordinate the lower and upper box rows (when a box is present).

#[derive(Debug)]
enum NewtonEnd {
    Converged,
    Early,
    Stalled,
    Budget,
}

trait BarrierModel {
    fn dim(&self) -> usize;
    fn obj(&self) -> &[f64];
    /// Fills positive slacks of all rows; false when some row is violated.
    fn slacks(&self, x: &[f64], out: &mut Vec<f64>) -> bool;
    /// Adds barrier gradient and Hessian at `x` with slacks `ds`.
    fn curvature(&self, x: &[f64], ds: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>);
    /// Exact expansion of each row value along `dir`:
    /// row_j(x + a dir) = row_j(x) + a lin[j] + a^2 quad[j]. Keeps the line
    /// search free of the cancellation that plagues recomputed slacks.
    fn row_expansion(&self, x: &[f64], dir: &[f64], lin: &mut Vec<f64>, quad: &mut Vec<f64>);
}

fn solve_spd(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = hess.nrows();
    let scale = (hess.diagonal().iter().map(|d| d.abs()).sum::<f64>() / dim as f64).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..dim {
            h[(i, i)] += ridge;
        }
        if let Some(ch) = h.cholesky() {
            return Some(ch.solve(&(-grad)));
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    None
}

fn newton_loop<M: BarrierModel>(
    model: &M,
    x: &mut [f64],
    t: f64,
    cfg: &SolverConfig,
    budget: &mut usize,
    mut early: impl FnMut(&[f64]) -> bool,
) -> NewtonEnd {
    let dim = model.dim();
    let mut ds = Vec::new();
    let mut ds_new = Vec::new();
    let mut lin = Vec::new();
    let mut quad = Vec::new();
    let mut trial = vec![0.0; dim];
    loop {
        if !model.slacks(x, &mut ds) {
            return NewtonEnd::Stalled;
        }
        let mut grad = DVector::from_iterator(dim, model.obj().iter().map(|o| t * o));
        let mut hess = DMatrix::zeros(dim, dim);
        model.curvature(x, &ds, &mut grad, &mut hess);
        let dir = match solve_spd(&hess, &grad) {
            Some(d) => d,
            None => return NewtonEnd::Stalled,
        };
        let gd: f64 = grad.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
        let dec2 = -gd;
        if dec2 <= 2.0 * cfg.newton_tol {
            return NewtonEnd::Converged;
        }
        if *budget == 0 {
            return NewtonEnd::Budget;
        }
        *budget -= 1;
        let objd: f64 = model.obj().iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
        model.row_expansion(x, dir.as_slice(), &mut lin, &mut quad);
        let mut alpha = 1.0;
        loop {
            // Merit difference in expansion form, immune to slack cancellation.
            let mut ok = true;
            let mut df = t * alpha * objd;
            for ((l, q), dl) in lin.iter().zip(&quad).zip(&ds) {
                let delta = alpha * l + alpha * alpha * q;
                if delta >= *dl {
                    ok = false;
                    break;
                }
                df -= (-delta / dl).ln_1p();
            }
            if ok && df <= cfg.armijo_slope * alpha * gd {
                break;
            }
            alpha *= cfg.armijo_shrink;
            if alpha < ALPHA_MIN {
                return NewtonEnd::Stalled;
            }
        }
        for i in 0..dim {
            trial[i] = x[i] + alpha * dir[i];
        }
        if !model.slacks(&trial, &mut ds_new) {
            // Rounding pushed the accepted point onto a boundary.
            return NewtonEnd::Stalled;
        }
        x.copy_from_slice(&trial);
        if early(x) {
            return NewtonEnd::Early;
        }
    }
}

struct P2Model<'a> {
    lambda: &'a [f64],
    quads: &'a [QuadConstraint],
    relax: f64,
    lo: Option<&'a [f64]>,
    hi: Option<&'a [f64]>,
}

impl BarrierModel for P2Model<'_> {
    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn obj(&self) -> &[f64] {
        self.lambda
    }

    fn slacks(&self, x: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        for con in self.quads {
            let d = self.relax - con.g(x);
            if d <= 0.0 {
                return false;
            }
            out.push(d);
        }
        if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
            for i in 0..x.len() {
                let dl = x[i] - lo[i];
                let dh = hi[i] - x[i];
                if dl <= 0.0 || dh <= 0.0 {
                    return false;
                }
                out.push(dl);
                out.push(dh);
            }
        }
        true
    }

    fn curvature(&self, x: &[f64], ds: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let n = x.len();
        let mut row = 0;
        for con in self.quads {
            let inv = 1.0 / ds[row];
            row += 1;
            let gq = con.grad(x);
            let inv2 = inv * inv;
            for i in 0..n {
                grad[i] += gq[i] * inv;
                for j in 0..n {
                    hess[(i, j)] += gq[i] * gq[j] * inv2;
                }
            }
            match &con.q {
                QForm::Diag(d) => {
                    for i in 0..n {
                        hess[(i, i)] += 2.0 * d[i] * inv;
                    }
                }
                QForm::Dense(m) => {
                    for i in 0..n {
                        for j in 0..n {
                            hess[(i, j)] += 2.0 * m[i][j] * inv;
                        }
                    }
                }
            }
        }
        if self.lo.is_some() {
            for i in 0..n {
                let il = 1.0 / ds[row];
                let ih = 1.0 / ds[row + 1];
                row += 2;
                grad[i] += ih - il;
                hess[(i, i)] += il * il + ih * ih;
            }
        }
    }

    fn row_expansion(&self, x: &[f64], dir: &[f64], lin: &mut Vec<f64>, quad: &mut Vec<f64>) {
        lin.clear();
        quad.clear();
        for con in self.quads {
            lin.push(la::dot(&con.grad(x), dir));
            quad.push(con.q.quad_form(dir));
        }
        if self.lo.is_some() {
            for &di in dir.iter() {
                lin.push(-di);
                quad.push(0.0);
                lin.push(di);
                quad.push(0.0);
            }
        }
    }
}

struct P1Model<'a> {
    quads: &'a [QuadConstraint],
    lo: Option<&'a [f64]>,
    hi: Option<&'a [f64]>,
    obj: Vec<f64>,
    n: usize,
}

impl BarrierModel for P1Model<'_> {
    fn dim(&self) -> usize {
        self.n + 1
    }

    fn obj(&self) -> &[f64] {
        &self.obj
    }

    fn slacks(&self, x: &[f64], out: &mut Vec<f64>) -> bool {
        out.clear();
        let (v, s) = (&x[..self.n], x[self.n]);
        for con in self.quads {
            let d = s - con.g(v);
            if d <= 0.0 {
                return false;
            }
            out.push(d);
        }
        if let (Some(lo), Some(hi)) = (self.lo, self.hi) {
            for i in 0..self.n {
                let dl = v[i] - lo[i];
                let dh = hi[i] - v[i];
                if dl <= 0.0 || dh <= 0.0 {
                    return false;
                }
                out.push(dl);
                out.push(dh);
            }
        }
        true
    }

    fn curvature(&self, x: &[f64], ds: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>) {
        let n = self.n;
        let v = &x[..n];
        let mut row = 0;
        for con in self.quads {
            let inv = 1.0 / ds[row];
            row += 1;
            let inv2 = inv * inv;
            let gq = con.grad(v);
            for i in 0..n {
                grad[i] += gq[i] * inv;
                for j in 0..n {
                    hess[(i, j)] += gq[i] * gq[j] * inv2;
                }
                hess[(i, n)] -= gq[i] * inv2;
                hess[(n, i)] -= gq[i] * inv2;
            }
            grad[n] -= inv;
            hess[(n, n)] += inv2;
            match &con.q {
                QForm::Diag(d) => {
                    for i in 0..n {
                        hess[(i, i)] += 2.0 * d[i] * inv;
                    }
                }
                QForm::Dense(m) => {
                    for i in 0..n {
                        for j in 0..n {
                            hess[(i, j)] += 2.0 * m[i][j] * inv;
                        }
                    }
                }
            }
        }
        if self.lo.is_some() {
            for i in 0..n {
                let il = 1.0 / ds[row];
                let ih = 1.0 / ds[row + 1];
                row += 2;
                grad[i] += ih - il;
                hess[(i, i)] += il * il + ih * ih;
            }
        }
    }

    fn row_expansion(&self, x: &[f64], dir: &[f64], lin: &mut Vec<f64>, quad: &mut Vec<f64>) {
        lin.clear();
        quad.clear();
        let n = self.n;
        let v = &x[..n];
        let dv = &dir[..n];
        for con in self.quads {
            lin.push(la::dot(&con.grad(v), dv) - dir[n]);
            quad.push(con.q.quad_form(dv));
        }
        if self.lo.is_some() {
            for &di in dv.iter() {
                lin.push(-di);
                quad.push(0.0);
                lin.push(di);
                quad.push(0.0);
            }
        }
    }
}

enum Phase1 {
    Interior { v: Vec<f64> },
    Tight { v: Vec<f64>, slack: f64 },
    Empty,
    Budget { v: Vec<f64> },
}

fn barrier_phase1(
    quads: &[QuadConstraint],
    lo: Option<&[f64]>,
    hi: Option<&[f64]>,
    v0: Vec<f64>,
    cfg: &SolverConfig,
    budget: &mut usize,
) -> Phase1 {
    let n = v0.len();
    let maxg = quads
        .iter()
        .map(|c| c.g(&v0))
        .fold(f64::NEG_INFINITY, f64::max);
    if maxg <= -INTERIOR_TOL {
        return Phase1::Interior { v: v0 };
    }
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let model = P1Model { quads, lo, hi, obj, n };
    let mut x = v0;
    x.push(maxg + 1.0);
    let m_rows = (quads.len() + if lo.is_some() { 2 * n } else { 0 }) as f64;
    let mut t = cfg.t0;
    for _ in 0..OUTER_CAP {
        let end = newton_loop(&model, &mut x, t, cfg, budget, |y: &[f64]| {
            y[n] <= -INTERIOR_TOL
        });
        let slack = x[n];
        match end {
            NewtonEnd::Early => return Phase1::Interior { v: x[..n].to_vec() },
            NewtonEnd::Budget => return Phase1::Budget { v: x[..n].to_vec() },
            NewtonEnd::Converged | NewtonEnd::Stalled => {
                if slack - m_rows / t > EMPTY_CERT_TOL {
                    return Phase1::Empty;
                }
                if m_rows / t <= PHASE1_GAP {
                    return Phase1::Tight {
                        v: x[..n].to_vec(),
                        slack,
                    };
                }
                if matches!(end, NewtonEnd::Stalled) {
                    return if slack <= cfg.feas_tol {
                        Phase1::Tight {
                            v: x[..n].to_vec(),
                            slack,
                        }
                    } else {
                        Phase1::Budget { v: x[..n].to_vec() }
                    };
                }
            }
        }
        t *= cfg.mu;
    }
    Phase1::Budget { v: x[..n].to_vec() }
}

/// Weak-duality bound from multipliers u_j = 1/(t d_j): the unconstrained
/// infimum of the Lagrangian, exact because the quadratic part is PD. Also
/// returns the relative stationarity residual.
fn certified_bound(
    lambda: &[f64],
    quads: &[QuadConstraint],
    bb: Option<&BoxBounds>,
    x: &[f64],
    ds: &[f64],
    t: f64,
) -> (f64, f64) {
    let n = lambda.len();
    let nq = quads.len();
    let u: Vec<f64> = ds.iter().map(|d| 1.0 / (t * d)).collect();
    let mut st = lambda.to_vec();
    let mut r = lambda.to_vec();
    let mut cst = 0.0;
    for (j, con) in quads.iter().enumerate() {
        let grad = con.grad(x);
        la::axpy(&mut st, u[j], &grad);
        la::axpy(&mut r, u[j], &con.b);
        cst += u[j] * con.gamma;
    }
    if let Some(bb) = bb {
        for i in 0..n {
            let ul = u[nq + 2 * i];
            let uh = u[nq + 2 * i + 1];
            st[i] += uh - ul;
            r[i] += uh - ul;
            cst += ul * bb.lo[i] - uh * bb.hi[i];
        }
    }
    let stat = la::norm_inf(&st) / (1.0 + la::norm_inf(lambda));
    let all_diag = quads.iter().all(|c| matches!(&c.q, QForm::Diag(_)));
    let bound = if all_diag {
        let mut a = vec![0.0; n];
        for (j, con) in quads.iter().enumerate() {
            if let QForm::Diag(d) = &con.q {
                for i in 0..n {
                    a[i] += u[j] * d[i];
                }
            }
        }
        if a.iter().any(|&ai| ai <= 0.0) {
            f64::NEG_INFINITY
        } else {
            cst - r.iter().zip(&a).map(|(ri, ai)| ri * ri / (4.0 * ai)).sum::<f64>()
        }
    } else {
        let mut amat = DMatrix::zeros(n, n);
        for (j, con) in quads.iter().enumerate() {
            match &con.q {
                QForm::Diag(d) => {
                    for i in 0..n {
                        amat[(i, i)] += u[j] * d[i];
                    }
                }
                QForm::Dense(m) => {
                    for i in 0..n {
                        for k in 0..n {
                            amat[(i, k)] += u[j] * m[i][k];
                        }
                    }
                }
            }
        }
        match amat.cholesky() {
            Some(ch) => {
                let y = ch.solve(&DVector::from_column_slice(&r));
                cst - la::dot(&r, y.as_slice()) / 4.0
            }
            None => f64::NEG_INFINITY,
        }
    };
    (bound, stat)
}

struct P2Out {
    v: Vec<f64>,
    value: f64,
    bound: f64,
    kkt: f64,
    status: KernelStatus,
}

#[allow(clippy::too_many_arguments)]
fn barrier_phase2(
    lambda: &[f64],
    quads: &[QuadConstraint],
    relax: f64,
    lo: Option<&[f64]>,
    hi: Option<&[f64]>,
    bb_true: Option<&BoxBounds>,
    mut x: Vec<f64>,
    cfg: &SolverConfig,
    budget: &mut usize,
) -> P2Out {
    let n = lambda.len();
    let model = P2Model {
        lambda,
        quads,
        relax,
        lo,
        hi,
    };
    let m_rows = (quads.len() + if lo.is_some() { 2 * n } else { 0 }) as f64;
    let mut t = cfg.t0;
    for _ in 0..OUTER_CAP {
        let end = newton_loop(&model, &mut x, t, cfg, budget, |_| false);
        let value = la::dot(lambda, &x);
        match end {
            NewtonEnd::Budget | NewtonEnd::Early => break,
            NewtonEnd::Converged | NewtonEnd::Stalled => {
                if m_rows / t <= cfg.gap_tol * (1.0 + value.abs()) {
                    break;
                }
                if matches!(end, NewtonEnd::Stalled) {
                    break;
                }
            }
        }
        t *= cfg.mu;
    }
    let mut ds = Vec::new();
    let in_rows = model.slacks(&x, &mut ds);
    debug_assert!(in_rows, "barrier iterate left the feasible region");
    let value = la::dot(lambda, &x);
    let (bound, stat) = certified_bound(lambda, quads, bb_true, &x, &ds, t);
    // Optimal means the target gap was actually certified, regardless of why
    // the schedule stopped.
    let optimal = value - bound <= cfg.gap_tol * (1.0 + value.abs());
    let mut viol: f64 = 0.0;
    for con in quads {
        viol = viol.max(con.g(&x));
    }
    if let Some(bb) = bb_true {
        for ((xi, lo), hi) in x.iter().zip(&bb.lo).zip(&bb.hi) {
            viol = viol.max(lo - xi).max(xi - hi);
        }
    }
    P2Out {
        value,
        bound,
        kkt: viol.max(0.0).max(stat),
        status: if optimal {
            KernelStatus::Optimal
        } else {
            KernelStatus::IterationLimit
        },
        v: x,
    }
}

fn widened_bounds(bb: Option<&BoxBounds>) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    match bb {
        None => (None, None),
        Some(bb) => {
            let mut lo = bb.lo.clone();
            let mut hi = bb.hi.clone();
            for i in 0..lo.len() {
                if hi[i] - lo[i] < 2.0 * MIN_HALF_WIDTH {
                    let mid = 0.5 * (lo[i] + hi[i]);
                    lo[i] = mid - MIN_HALF_WIDTH;
                    hi[i] = mid + MIN_HALF_WIDTH;
                }
            }
            (Some(lo), Some(hi))
        }
    }
}

/// Average of the ellipsoid centers, pulled strictly inside the box.
fn start_point(
    quads: &[QuadConstraint],
    lo: Option<&[f64]>,
    hi: Option<&[f64]>,
) -> Result<Vec<f64>, KernelError> {
    let n = quads[0].b.len();
    let mut v = vec![0.0; n];
    for con in quads {
        let geo = ellipsoid_geometry(con).ok_or(KernelError::NotPd)?;
        la::axpy(&mut v, 1.0, &geo.center);
    }
    let inv = 1.0 / quads.len() as f64;
    for vi in v.iter_mut() {
        *vi *= inv;
    }
    if let (Some(lo), Some(hi)) = (lo, hi) {
        for i in 0..n {
            let margin = 1e-3 * (hi[i] - lo[i]);
            v[i] = v[i].max(lo[i] + margin).min(hi[i] - margin);
        }
    }
    Ok(v)
}

fn clamp_to_box(v: &mut [f64], bb: Option<&BoxBounds>) {
    if let Some(bb) = bb {
        for (vi, (lo, hi)) in v.iter_mut().zip(bb.lo.iter().zip(&bb.hi)) {
            *vi = vi.clamp(*lo, *hi);
        }
    }
}

/// Decides whether the intersection of `cons` with the box holds any point.
/// `Empty` is certified by a dual bound on the minimal constraint slack and
/// is safe to prune on; `Unknown` means the budget ran out near the boundary.
pub fn feasibility(
    cons: &[QuadConstraint],
    bb: Option<&BoxBounds>,
    cfg: &SolverConfig,
) -> Feasibility {
    if cons.is_empty() {
        return Feasibility::Feasible(match bb {
            Some(bb) => bb.lo.iter().zip(&bb.hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            None => Vec::new(),
        });
    }
    for con in cons {
        match ellipsoid_geometry(con) {
            Some(geo) if geo.radius_sq < -EMPTY_TOL => return Feasibility::Empty,
            Some(_) => {}
            None => return Feasibility::Unknown,
        }
    }
    let (lo, hi) = widened_bounds(bb);
    let v0 = match start_point(cons, lo.as_deref(), hi.as_deref()) {
        Ok(v) => v,
        Err(_) => return Feasibility::Unknown,
    };
    let mut budget = cfg.newton_budget;
    let finish = |mut v: Vec<f64>| {
        clamp_to_box(&mut v, bb);
        if cons.iter().all(|c| c.g(&v) <= cfg.feas_tol) {
            Feasibility::Feasible(v)
        } else {
            Feasibility::Unknown
        }
    };
    match barrier_phase1(cons, lo.as_deref(), hi.as_deref(), v0, cfg, &mut budget) {
        Phase1::Interior { v } => finish(v),
        Phase1::Tight { v, slack } => {
            if slack <= cfg.feas_tol {
                finish(v)
            } else {
                Feasibility::Unknown
            }
        }
        Phase1::Empty => Feasibility::Empty,
        Phase1::Budget { .. } => Feasibility::Unknown,
    }
}

/// Minimizes lambda' v over the intersection of ellipsoids inside the box,
/// with a path-following barrier. The result's `value - gap` is a certified
/// lower bound even on early termination.
pub fn linmin_intersection(
    lambda: &[f64],
    cons: &[QuadConstraint],
    bb: Option<&BoxBounds>,
    cfg: &SolverConfig,
) -> Result<SolveResult, KernelError> {
    let n = lambda.len();
    if cons.is_empty() {
        return match bb {
            Some(bb) => Ok(linmin_box(lambda, bb)),
            None => Err(KernelError::Unbounded),
        };
    }
    for con in cons {
        let geo = ellipsoid_geometry(con).ok_or(KernelError::NotPd)?;
        if geo.radius_sq < -EMPTY_TOL {
            return Ok(infeasible_result(n));
        }
    }
    let (lo, hi) = widened_bounds(bb);
    let v0 = start_point(cons, lo.as_deref(), hi.as_deref())?;
    let mut budget = cfg.newton_budget;
    let phase1 = barrier_phase1(cons, lo.as_deref(), hi.as_deref(), v0, cfg, &mut budget);
    let (start, relax) = match phase1 {
        Phase1::Empty => return Ok(infeasible_result(n)),
        Phase1::Interior { v } => (v, 0.0),
        Phase1::Tight { v, slack } => (v, 2.0 * slack.max(0.0) + THIN_MARGIN),
        Phase1::Budget { v } => {
            let mut viol: f64 = 0.0;
            for con in cons {
                viol = viol.max(con.g(&v));
            }
            return Ok(SolveResult {
                value: la::dot(lambda, &v),
                argmin: v,
                gap: f64::INFINITY,
                kkt_residual: viol.max(0.0),
                status: KernelStatus::IterationLimit,
            });
        }
    };
    let out = barrier_phase2(
        lambda,
        cons,
        relax,
        lo.as_deref(),
        hi.as_deref(),
        bb,
        start,
        cfg,
        &mut budget,
    );
    Ok(SolveResult {
        value: out.value,
        argmin: out.v,
        gap: (out.value - out.bound).max(0.0),
        kkt_residual: out.kkt,
        status: out.status,
    })
}

/// Minimizes lambda' v over one disjunct inside the box, routing through the
/// closed form whenever it is exact and through the barrier otherwise.
pub fn disjunct_linmin(
    lambda: &[f64],
    disjunct: &Disjunct,
    bb: Option<&BoxBounds>,
    cfg: &SolverConfig,
) -> Result<SolveResult, KernelError> {
    let cons = &disjunct.constraints;
    if cons.is_empty() {
        return match bb {
            Some(bb) => Ok(linmin_box(lambda, bb)),
            None => Err(KernelError::Unbounded),
        };
    }
    if cons.len() == 1 {
        let r = linmin_single(lambda, &cons[0], cfg)?;
        match (bb, r.status) {
            (None, _) | (_, KernelStatus::Infeasible) => return Ok(r),
            (Some(bb), _) if bb.contains(&r.argmin, 0.0) => return Ok(r),
            _ => {}
        }
    }
    linmin_intersection(lambda, cons, bb, cfg)
}

/// Minimum of `disjunct_linmin` across the disjuncts of one disjunction; ties
/// keep the lowest index. Empty disjuncts lose to any finite value.
pub(crate) fn best_disjunct(
    lambda: &[f64],
    disjuncts: &[Disjunct],
    bb: Option<&BoxBounds>,
    cfg: &SolverConfig,
) -> Result<(usize, SolveResult), KernelError> {
    let mut best: Option<(usize, SolveResult)> = None;
    for (i, dj) in disjuncts.iter().enumerate() {
        let r = disjunct_linmin(lambda, dj, bb, cfg)?;
        let better = match &best {
            None => true,
            Some((_, cur)) => r.value < cur.value,
        };
        if better {
            best = Some((i, r));
        }
    }
    best.ok_or(KernelError::NoDisjuncts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // g(x) = sum q_i (x_i - c_i)^2 - r2, expanded to standard form.
    fn ell(q: &[f64], center: &[f64], r2: f64) -> QuadConstraint {
        let b: Vec<f64> = q.iter().zip(center).map(|(qi, ci)| -2.0 * qi * ci).collect();
        let gamma = q
            .iter()
            .zip(center)
            .map(|(qi, ci)| qi * ci * ci)
            .sum::<f64>()
            - r2;
        QuadConstraint::new(QForm::Diag(q.to_vec()), b, gamma)
    }

    fn disk(cx: f64, cy: f64, r: f64) -> QuadConstraint {
        ell(&[1.0, 1.0], &[cx, cy], r * r)
    }

    // The flat ellipse family used by the worked example: x^2 + (y-cy)^2/4 <= 1.
    fn flat(cx: f64, cy: f64) -> QuadConstraint {
        ell(&[1.0, 0.25], &[cx, cy], 1.0)
    }

    fn wrap(cons: Vec<QuadConstraint>) -> Disjunct {
        Disjunct {
            constraints: cons,
            provenance: vec![(crate::model::DisjunctionId(1), 0)],
        }
    }

    // Independent oracle: scan the ellipse boundary by angle with its own
    // 2x2 inversion, then refine with ternary search around the best angle.
    fn boundary_scan_min(lambda: &[f64], con: &QuadConstraint) -> f64 {
        let (q00, q01, q11) = match &con.q {
            QForm::Diag(d) => (d[0], 0.0, d[1]),
            QForm::Dense(m) => (m[0][0], m[0][1], m[1][1]),
        };
        let det = q00 * q11 - q01 * q01;
        let inv = [[q11 / det, -q01 / det], [-q01 / det, q00 / det]];
        let c = [
            -0.5 * (inv[0][0] * con.b[0] + inv[0][1] * con.b[1]),
            -0.5 * (inv[1][0] * con.b[0] + inv[1][1] * con.b[1]),
        ];
        let s = 0.25
            * (con.b[0] * (inv[0][0] * con.b[0] + inv[0][1] * con.b[1])
                + con.b[1] * (inv[1][0] * con.b[0] + inv[1][1] * con.b[1]))
            - con.gamma;
        assert!(s > 0.0, "oracle expects a solid ellipse");
        let eval = |theta: f64| {
            let u = [theta.cos(), theta.sin()];
            let uqu = q00 * u[0] * u[0] + 2.0 * q01 * u[0] * u[1] + q11 * u[1] * u[1];
            let scale = (s / uqu).sqrt();
            lambda[0] * (c[0] + scale * u[0]) + lambda[1] * (c[1] + scale * u[1])
        };
        let steps = 1 << 20;
        let mut best_t = 0.0;
        let mut best = f64::INFINITY;
        for k in 0..steps {
            let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
            let v = eval(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let step = 2.0 * std::f64::consts::PI / steps as f64;
        let (mut a, mut b) = (best_t - 2.0 * step, best_t + 2.0 * step);
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if eval(m1) < eval(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        eval(0.5 * (a + b)).min(best)
    }

    // Independent oracle for 3-d diagonal ellipsoids: zooming scans over
    // spherical angles.
    fn sphere_scan_min(lambda: &[f64], q: &[f64], center: &[f64], r2: f64) -> f64 {
        let eval = |th: f64, ph: f64| {
            let u = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
            let uqu: f64 = q.iter().zip(&u).map(|(qi, ui)| qi * ui * ui).sum();
            let scale = (r2 / uqu).sqrt();
            lambda
                .iter()
                .zip(center)
                .zip(&u)
                .map(|((li, ci), ui)| li * (ci + scale * ui))
                .sum::<f64>()
        };
        let (mut t_lo, mut t_hi) = (0.0, std::f64::consts::PI);
        let (mut p_lo, mut p_hi) = (0.0, 2.0 * std::f64::consts::PI);
        let mut best = f64::INFINITY;
        for _ in 0..4 {
            let mut best_t = t_lo;
            let mut best_p = p_lo;
            for i in 0..=400 {
                let th = t_lo + (t_hi - t_lo) * i as f64 / 400.0;
                for j in 0..=800 {
                    let ph = p_lo + (p_hi - p_lo) * j as f64 / 800.0;
                    let v = eval(th, ph);
                    if v < best {
                        best = v;
                        best_t = th;
                        best_p = ph;
                    }
                }
            }
            let t_w = (t_hi - t_lo) * 0.02;
            let p_w = (p_hi - p_lo) * 0.02;
            t_lo = best_t - t_w;
            t_hi = best_t + t_w;
            p_lo = best_p - p_w;
            p_hi = best_p + p_w;
        }
        best
    }

    // Independent oracle: zooming rectangular grid search over feasible
    // points. Suitable for intersections with a fat interior.
    fn grid_min(
        lambda: &[f64],
        cons: &[QuadConstraint],
        bb: Option<&BoxBounds>,
        window: ([f64; 2], [f64; 2]),
    ) -> f64 {
        let (mut lo, mut hi) = window;
        let mut best = f64::INFINITY;
        for _ in 0..12 {
            let mut best_pt = None;
            for i in 0..=200 {
                for j in 0..=200 {
                    let x = [
                        lo[0] + (hi[0] - lo[0]) * i as f64 / 200.0,
                        lo[1] + (hi[1] - lo[1]) * j as f64 / 200.0,
                    ];
                    if let Some(bb) = bb {
                        if !bb.contains(&x, 0.0) {
                            continue;
                        }
                    }
                    if cons.iter().any(|c| c.g(&x) > 0.0) {
                        continue;
                    }
                    let v = lambda[0] * x[0] + lambda[1] * x[1];
                    if v < best {
                        best = v;
                        best_pt = Some(x);
                    }
                }
            }
            let center = match best_pt {
                Some(p) => p,
                None => [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
            };
            let w = [(hi[0] - lo[0]) * 0.1, (hi[1] - lo[1]) * 0.1];
            lo = [center[0] - w[0], center[1] - w[1]];
            hi = [center[0] + w[0], center[1] + w[1]];
        }
        best
    }

    #[test]
    fn geometry_recovers_center_and_radius() {
        let g = ellipsoid_geometry(&flat(0.0, 5.0)).unwrap();
        assert!((g.center[0] - 0.0).abs() < 1e-12);
        assert!((g.center[1] - 5.0).abs() < 1e-12);
        assert!((g.radius_sq - 1.0).abs() < 1e-12);

        // Dense case built from center (1, -2), squared radius 2.25.
        let q = QForm::Dense(vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
        let b = vec![-2.0, 3.0];
        let gamma = 4.0 - 2.25;
        let g = ellipsoid_geometry(&QuadConstraint::new(q, b, gamma)).unwrap();
        assert!((g.center[0] - 1.0).abs() < 1e-12);
        assert!((g.center[1] + 2.0).abs() < 1e-12);
        assert!((g.radius_sq - 2.25).abs() < 1e-12);
    }

    #[test]
    fn geometry_flags_empty_ellipsoids() {
        let mut con = disk(0.0, 0.0, 1.0);
        con.gamma += 1.5; // radius_sq becomes -0.5
        let g = ellipsoid_geometry(&con).unwrap();
        assert!(g.radius_sq < -EMPTY_TOL);
        let cfg = SolverConfig::default();
        let r = linmin_single(&[1.0, 0.0], &con, &cfg).unwrap();
        assert_eq!(r.status, KernelStatus::Infeasible);
        assert!(r.value.is_infinite());
        assert_eq!(feasibility(&[con], None, &cfg), Feasibility::Empty);
    }

    #[test]
    fn single_linmin_hand_values() {
        let cfg = SolverConfig::default();
        // Unit disk, objective x: minimum -1 at (-1, 0).
        let r = linmin_single(&[1.0, 0.0], &disk(0.0, 0.0, 1.0), &cfg).unwrap();
        assert!((r.value + 1.0).abs() < 1e-12);
        assert!((r.argmin[0] + 1.0).abs() < 1e-12);
        assert!(r.argmin[1].abs() < 1e-12);

        // Flat ellipse at (0, 5): 5 - sqrt(0.2^2 + 4) along (0.2, 1).
        let r = linmin_single(&[0.2, 1.0], &flat(0.0, 5.0), &cfg).unwrap();
        assert!((r.value - 2.99002487577583).abs() < 1e-10);

        // Zero objective returns the center with value 0.
        let r = linmin_single(&[0.0, 0.0], &flat(0.0, 5.0), &cfg).unwrap();
        assert_eq!(r.value, 0.0);
        assert!((r.argmin[1] - 5.0).abs() < 1e-12);

        // Point ellipsoid: value is the objective at the center.
        let mut point = disk(2.0, -1.0, 1.0);
        point.gamma += 1.0; // radius shrinks to zero
        let r = linmin_single(&[1.0, 1.0], &point, &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_linmin_matches_boundary_scan() {
        let cfg = SolverConfig::default();
        let dense = QuadConstraint::new(
            QForm::Dense(vec![vec![2.0, 0.5], vec![0.5, 1.0]]),
            vec![-2.0, 3.0],
            1.75,
        );
        let cases: Vec<(Vec<f64>, QuadConstraint)> = vec![
            (vec![1.0, 0.5], ell(&[1.0, 0.25], &[0.0, 5.0], 1.0)),
            (vec![-0.7, 2.0], ell(&[0.3, 0.9], &[4.0, -2.0], 3.0)),
            (vec![1.0, 1.0], dense.clone()),
            (vec![-0.3, 0.7], dense),
        ];
        for (lambda, con) in cases {
            let got = linmin_single(&lambda, &con, &cfg).unwrap();
            let want = boundary_scan_min(&lambda, &con);
            assert!(
                (got.value - want).abs() < 1e-9 * (1.0 + want.abs()),
                "value {} vs oracle {}",
                got.value,
                want
            );
            assert!(got.kkt_residual < 1e-9);
        }
    }

    #[test]
    fn single_linmin_matches_sphere_scan_in_3d() {
        let cfg = SolverConfig::default();
        let q = [1.0, 2.0, 0.5];
        let center = [0.0, 1.0, -1.0];
        let con = ell(&q, &center, 4.0);
        let lambda = [1.0, -1.0, 0.5];
        let got = linmin_single(&lambda, &con, &cfg).unwrap();
        let want = sphere_scan_min(&lambda, &q, &center, 4.0);
        assert!((got.value - want).abs() < 1e-6, "{} vs {}", got.value, want);
    }

    #[test]
    fn barrier_agrees_with_closed_form_on_one_ellipsoid() {
        let cfg = SolverConfig::default();
        let con = flat(0.0, 5.0);
        let lambda = [0.2, 1.0];
        let closed = linmin_single(&lambda, &con, &cfg).unwrap();
        let barrier = linmin_intersection(&lambda, std::slice::from_ref(&con), None, &cfg).unwrap();
        assert_eq!(barrier.status, KernelStatus::Optimal);
        assert!((barrier.value - closed.value).abs() < 1e-6 * (1.0 + closed.value.abs()));
        assert!(la::dist_sq(&barrier.argmin, &closed.argmin).sqrt() < 1e-3);
        assert!(barrier.gap >= 0.0);
        assert!(barrier.bound() <= closed.value + 1e-9);
    }

    #[test]
    fn barrier_handles_a_binding_box() {
        // Cutting the ellipse at y >= 4 moves the minimum to
        // (-sqrt(3)/2, 4) with value 4 - sqrt(3)/10.
        let cfg = SolverConfig::default();
        let bb = BoxBounds {
            lo: vec![-20.0, 4.0],
            hi: vec![20.0, 20.0],
        };
        let r = disjunct_linmin(&[0.2, 1.0], &wrap(vec![flat(0.0, 5.0)]), Some(&bb), &cfg).unwrap();
        assert_eq!(r.status, KernelStatus::Optimal);
        let want = 4.0 - 3.0f64.sqrt() / 10.0;
        assert!((r.value - want).abs() < 1e-6, "{} vs {}", r.value, want);
        assert!(r.kkt_residual < 1e-5);
    }

    #[test]
    fn intersection_matches_grid_oracle() {
        let cfg = SolverConfig::default();
        let cons = vec![flat(0.0, 5.0), flat(0.0, 2.0)];
        let lambda = [0.2, 1.0];
        let got = linmin_intersection(&lambda, &cons, None, &cfg).unwrap();
        let want = grid_min(&lambda, &cons, None, ([-1.5, 2.5], [1.5, 4.5]));
        assert!(
            (got.value - want).abs() < 5e-5 * (1.0 + want.abs()),
            "{} vs {}",
            got.value,
            want
        );
        // The pairwise minimum can never undercut either single-set minimum.
        for con in &cons {
            let single = linmin_single(&lambda, con, &cfg).unwrap();
            assert!(got.value >= single.value - 1e-8);
        }
    }

    #[test]
    fn intersection_certifies_separated_sets_empty() {
        let cfg = SolverConfig::default();
        let cons = vec![disk(0.0, 0.0, 1.0), disk(10.0, 0.0, 1.0)];
        let r = linmin_intersection(&[1.0, 1.0], &cons, None, &cfg).unwrap();
        assert_eq!(r.status, KernelStatus::Infeasible);
        assert!(r.value.is_infinite());
        assert_eq!(feasibility(&cons, None, &cfg), Feasibility::Empty);
    }

    #[test]
    fn feasibility_classifications() {
        let cfg = SolverConfig::default();
        // Overlapping disks.
        let overlap = vec![disk(0.0, 0.0, 1.0), disk(1.0, 0.0, 1.0)];
        match feasibility(&overlap, None, &cfg) {
            Feasibility::Feasible(p) => {
                assert!(overlap.iter().all(|c| c.g(&p) <= cfg.feas_tol));
            }
            other => panic!("expected feasible, got {other:?}"),
        }
        // Tangent disks touch in one point; must never be called empty.
        let tangent = vec![disk(0.0, 0.0, 1.0), disk(2.0, 0.0, 1.0)];
        assert_ne!(feasibility(&tangent, None, &cfg), Feasibility::Empty);
        // A disk having no overlap with the box.
        let bb = BoxBounds::symmetric(2, 1.0);
        let outside = vec![disk(5.0, 5.0, 1.0)];
        assert_eq!(feasibility(&outside, Some(&bb), &cfg), Feasibility::Empty);
    }

    #[test]
    fn certified_bounds_stay_below_sampled_feasible_points() {
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..30 {
            let c1 = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let r1 = rng.gen_range(0.5..2.0);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let c2 = [
                c1[0] + 0.5 * r1 * ang.cos(),
                c1[1] + 0.5 * r1 * ang.sin(),
            ];
            let r2 = rng.gen_range(0.5..2.0);
            let cons = vec![disk(c1[0], c1[1], r1), disk(c2[0], c2[1], r2)];
            let lambda = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let bb = if case % 2 == 0 {
                Some(BoxBounds::symmetric(2, 10.0))
            } else {
                None
            };
            let got = linmin_intersection(&lambda, &cons, bb.as_ref(), &cfg).unwrap();
            assert_eq!(got.status, KernelStatus::Optimal, "case {case}");
            assert!(got.gap >= 0.0);
            assert!(
                cons.iter().all(|c| c.g(&got.argmin) <= 1e-6),
                "case {case}: argmin violates constraints"
            );
            let bound = got.bound();
            let mut checked = 0;
            for _ in 0..4000 {
                let p = [
                    c1[0] + rng.gen_range(-r1..r1),
                    c1[1] + rng.gen_range(-r1..r1),
                ];
                let in_box = bb.as_ref().is_none_or(|b| b.contains(&p, 0.0));
                if in_box && cons.iter().all(|c| c.g(&p) <= 0.0) {
                    let fv = lambda[0] * p[0] + lambda[1] * p[1];
                    assert!(
                        bound <= fv + 1e-7 * (1.0 + fv.abs()),
                        "case {case}: bound {bound} above feasible value {fv}"
                    );
                    checked += 1;
                }
            }
            assert!(checked > 0, "case {case}: no feasible samples drawn");
        }
    }

    #[test]
    fn iteration_limit_still_reports_a_valid_bound() {
        let cfg = SolverConfig {
            newton_budget: 3,
            ..SolverConfig::default()
        };
        let cons = vec![flat(0.0, 5.0), flat(0.0, 2.0)];
        let lambda = [0.2, 1.0];
        let r = linmin_intersection(&lambda, &cons, None, &cfg).unwrap();
        assert_eq!(r.status, KernelStatus::IterationLimit);
        if r.gap.is_finite() {
            let want = grid_min(&lambda, &cons, None, ([-1.5, 2.5], [1.5, 4.5]));
            assert!(r.bound() <= want + 1e-6);
        }
    }

    #[test]
    fn disjunct_routing_prefers_the_closed_form() {
        let cfg = SolverConfig::default();
        let lambda = [0.2, 1.0];
        let dj = wrap(vec![flat(0.0, 5.0)]);
        // Wide box: the free minimizer is inside, closed form applies.
        let wide = BoxBounds::symmetric(2, 20.0);
        let closed = linmin_single(&lambda, &dj.constraints[0], &cfg).unwrap();
        let routed = disjunct_linmin(&lambda, &dj, Some(&wide), &cfg).unwrap();
        assert_eq!(routed.argmin, closed.argmin);
        assert_eq!(routed.value, closed.value);
        // No constraints: straight to the box corner.
        let free = Disjunct {
            constraints: vec![],
            provenance: vec![(crate::model::DisjunctionId(1), 0)],
        };
        let boxed = disjunct_linmin(&[2.0, -1.0], &free, Some(&wide), &cfg).unwrap();
        assert!((boxed.value - (2.0 * -20.0 - 1.0 * 20.0)).abs() < 1e-12);
        assert!(matches!(
            disjunct_linmin(&[2.0, -1.0], &free, None, &cfg),
            Err(KernelError::Unbounded)
        ));
    }

    #[test]
    fn box_linmin_hand_case() {
        let bb = BoxBounds {
            lo: vec![-1.0, -1.0, -1.0],
            hi: vec![2.0, 3.0, 5.0],
        };
        let r = linmin_box(&[2.0, -1.0, 0.0], &bb);
        assert_eq!(r.value, -5.0);
        assert_eq!(r.argmin, vec![-1.0, 3.0, 2.0]);
    }

    #[test]
    fn best_disjunct_breaks_ties_toward_the_lowest_index() {
        let cfg = SolverConfig::default();
        // Two copies of the same disk give identical minima; index 0 wins.
        let djs = vec![wrap(vec![disk(0.0, 0.0, 1.0)]), wrap(vec![disk(0.0, 0.0, 1.0)])];
        let (idx, _) = best_disjunct(&[1.0, 0.0], &djs, None, &cfg).unwrap();
        assert_eq!(idx, 0);
        // An empty disjunct loses to a finite one.
        let mut empty = disk(0.0, 0.0, 1.0);
        empty.gamma += 2.0;
        let djs = vec![wrap(vec![empty]), wrap(vec![disk(4.0, 0.0, 1.0)])];
        let (idx, r) = best_disjunct(&[1.0, 0.0], &djs, None, &cfg).unwrap();
        assert_eq!(idx, 1);
        assert!((r.value - 3.0).abs() < 1e-9);
    }
}
