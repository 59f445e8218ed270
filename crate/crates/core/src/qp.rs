//! Dense primal-dual interior-point solver for
//!
//! ```text
//! minimize    (W p)^T (W p)
//! subject to  B p <= -gamma * 1
//! ```
//!
//! with Mehrotra predictor-corrector steps, followed by an equality-constrained
//! polish on the detected active set and an independent KKT check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PrecodeProblem {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub gamma: f64,
}

impl PrecodeProblem {
    pub fn new(w: DMatrix<f64>, b: DMatrix<f64>, gamma: f64) -> Result<Self> {
        if w.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "W has {} columns but B has {}",
                w.ncols(),
                b.ncols()
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be finite, got {gamma}")));
        }
        Ok(Self { w, b, gamma })
    }

    pub fn n_vars(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_constraints(&self) -> usize {
        self.b.nrows()
    }

    /// `(W p)^T (W p)`
    pub fn objective(&self, p: &DVector<f64>) -> f64 {
        (&self.w * p).norm_squared()
    }

    /// Same problem with another threshold.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            w: self.w.clone(),
            b: self.b.clone(),
            gamma,
        }
    }

    fn zero_row(&self) -> Option<usize> {
        (0..self.b.nrows()).find(|&i| self.b.row(i).iter().all(|&x| x == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Bound on `max(B p + gamma)` for an optimal point.
    pub feas_tol: f64,
    /// Bound on the KKT residual of an optimal point.
    pub kkt_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            kkt_tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecodeSolution {
    pub p: Vec<f64>,
    /// Multipliers of the inequality constraints.
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// `max_i (B p + gamma)_i`; nonpositive when feasible.
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl PrecodeSolution {
    /// Multiplies the solution of a problem by `c > 0`, which is the solution
    /// of the same problem with threshold `c * gamma`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p: self.p.iter().map(|x| x * c).collect(),
            lambda: self.lambda.iter().map(|x| x * c).collect(),
            objective: self.objective * c * c,
            max_violation: self.max_violation * c,
            kkt_residual: self.kkt_residual * c.max(1.0),
            iterations: self.iterations,
            status: self.status,
        }
    }
}

/// Independent optimality check of a candidate `(p, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(0, max_i (B p + gamma)_i)`
    pub primal_violation: f64,
    /// `max(0, -min_i lambda_i)`
    pub dual_violation: f64,
    /// `|| 2 W^T W p + B^T lambda ||_inf / max(1, || 2 W^T W p ||_inf)`
    pub stationarity: f64,
    /// `max_i |lambda_i (B p + gamma)_i|`
    pub complementarity: f64,
}

impl KktReport {
    /// Worst of the dual-side residuals.
    pub fn residual(&self) -> f64 {
        let parts = [self.dual_violation, self.stationarity, self.complementarity];
        if parts.iter().any(|x| x.is_nan()) {
            return f64::INFINITY;
        }
        self.dual_violation.max(self.stationarity).max(self.complementarity)
    }

    pub fn passes(&self, opts: &SolveOptions) -> bool {
        self.primal_violation <= opts.feas_tol && self.residual() <= opts.kkt_tol
    }
}

pub fn verify_kkt(problem: &PrecodeProblem, p: &[f64], lambda: &[f64]) -> KktReport {
    let p = DVector::from_column_slice(p);
    let lam = DVector::from_column_slice(lambda);
    let wp = &problem.w * &p;
    let grad = problem.w.transpose() * wp * 2.0;
    let stat = &grad + problem.b.transpose() * &lam;
    let g = &problem.b * &p + DVector::from_element(problem.n_constraints(), problem.gamma);
    KktReport {
        primal_violation: g.max().max(0.0),
        dual_violation: (-lam.min()).max(0.0),
        stationarity: stat.amax() / grad.amax().max(1.0),
        complementarity: lam.component_mul(&g).amax(),
    }
}

/// Solves the QP. `Infeasible` is returned as a status, not an error, when
/// a row of `B` is zero or a Farkas certificate is found.
pub fn solve(problem: &PrecodeProblem, opts: &SolveOptions) -> PrecodeSolution {
    let n = problem.n_vars();
    let m = problem.n_constraints();
    let gamma = problem.gamma;

    if gamma <= 0.0 || m == 0 {
        // The origin is feasible and minimizes a PSD quadratic.
        return finish(
            problem,
            DVector::zeros(n),
            DVector::zeros(m),
            0,
            SolveStatus::Optimal,
            opts,
        );
    }
    if let Some(row) = problem.zero_row() {
        debug_assert!(row < m);
        let mut sol = finish(
            problem,
            DVector::zeros(n),
            DVector::zeros(m),
            0,
            SolveStatus::Infeasible,
            opts,
        );
        sol.status = SolveStatus::Infeasible;
        return sol;
    }

    let b = &problem.b;
    let bt = b.transpose();
    let h = DVector::from_element(m, -gamma);
    let mut hess = problem.w.transpose() * &problem.w * 2.0;
    if hess.clone().cholesky().is_none() {
        for i in 0..n {
            hess[(i, i)] += 1e-10;
        }
    }

    // Least-norm point aimed at B p = -gamma 1.
    let mut btb = &bt * b;
    for i in 0..n {
        btb[(i, i)] += 1e-8;
    }
    let mut p = match btb.cholesky() {
        Some(ch) => ch.solve(&(&bt * &h)),
        None => DVector::zeros(n),
    };
    let scale = gamma.max(1.0);
    let mut s = (&h - b * &p).map(|x| x.max(scale));
    let mut lam = DVector::from_element(m, scale);

    let h_norm = h.amax();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let hp = &hess * &p;
        let r_d = &hp + &bt * &lam;
        let r_p = b * &p + &s - &h;
        let mu = s.dot(&lam) / m as f64;
        let primal_ok = r_p.amax() <= 1e-11 * (1.0 + h_norm);
        let dual_ok = r_d.amax() <= 1e-11 * (1.0 + hp.amax());
        if primal_ok && dual_ok && mu <= 1e-12 * (1.0 + h_norm) {
            break;
        }
        // Near the central path's end the active set is usually settled.
        if mu <= 1e-6 * (1.0 + h_norm) && r_p.amax() <= 1e-6 * (1.0 + h_norm) {
            if let Some((pp, ll)) = polish(problem, &hess, &s, &lam, opts) {
                let sol = finish(problem, pp, ll, iterations, SolveStatus::Optimal, opts);
                if sol.status == SolveStatus::Optimal {
                    return sol;
                }
            }
        }
        iterations += 1;

        let d = lam.component_div(&s);
        let mut kkt = &hess + &bt * DMatrix::from_diagonal(&d) * b;
        kkt.fill_lower_triangle_with_upper_triangle();
        let Some(chol) = regularized_cholesky(kkt) else {
            break;
        };
        let newton = |r_c: &DVector<f64>| {
            let rhs_inner = (r_c - lam.component_mul(&r_p)).component_div(&s);
            let dp = chol.solve(&(-&r_d + &bt * rhs_inner));
            let ds = -&r_p - b * &dp;
            let dl = -(r_c + lam.component_mul(&ds)).component_div(&s);
            (dp, ds, dl)
        };

        let r_c_aff = s.component_mul(&lam);
        let (dp_a, ds_a, dl_a) = newton(&r_c_aff);
        let alpha_aff = max_step(&s, &ds_a).min(max_step(&lam, &dl_a)).min(1.0);
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&lam + &dl_a * alpha_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let _ = dp_a;

        let r_c = &r_c_aff + ds_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let (dp, ds, dl) = newton(&r_c);
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&lam, &dl))).min(1.0);
        let p_next = &p + &dp * alpha;
        let s_next = &s + &ds * alpha;
        let lam_next = &lam + &dl * alpha;
        if p_next
            .iter()
            .chain(s_next.iter())
            .chain(lam_next.iter())
            .any(|x| !x.is_finite())
        {
            break;
        }
        p = p_next;
        s = s_next;
        lam = lam_next;
    }

    if let Some((pp, ll)) = polish(problem, &hess, &s, &lam, opts) {
        let sol = finish(problem, pp, ll, iterations, SolveStatus::Optimal, opts);
        if sol.status == SolveStatus::Optimal {
            return sol;
        }
    }
    // An early exit is still accepted when the iterate passes the KKT check.
    let mut sol = finish(problem, p, lam.clone(), iterations, SolveStatus::Optimal, opts);
    if sol.status != SolveStatus::Optimal && farkas_certificate(b, &lam) {
        sol.status = SolveStatus::Infeasible;
    }
    sol
}

/// Solves `minimize p^T Q p` subject to `B p <= -gamma` and returns an error
/// unless the result is certified optimal.
pub fn solve_checked(problem: &PrecodeProblem, opts: &SolveOptions) -> Result<PrecodeSolution> {
    let sol = solve(problem, opts);
    match sol.status {
        SolveStatus::Optimal => Ok(sol),
        SolveStatus::Infeasible => Err(Error::Infeasible(match problem.zero_row() {
            Some(r) => format!("row {r} of B is zero"),
            None => "no point satisfies B p <= -gamma".into(),
        })),
        SolveStatus::MaxIter => Err(Error::MaxIter {
            iterations: sol.iterations,
            max_violation: sol.max_violation,
            kkt_residual: sol.kkt_residual,
        }),
    }
}

/// Cholesky factor, retried with a growing diagonal shift when the matrix
/// is numerically indefinite.
fn regularized_cholesky(a: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = a.clone().cholesky() {
        return Some(c);
    }
    let diag_max = a.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut shift = 1e-14 * diag_max;
    while shift < 1e-6 * diag_max {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += shift;
        }
        if let Some(c) = b.cholesky() {
            return Some(c);
        }
        shift *= 100.0;
    }
    None
}

fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Active-set refinement from the interior iterate: solve the equality
/// system on the current set, then drop the most negative multiplier or add
/// the most violated row, until neither exists.
fn polish(
    problem: &PrecodeProblem,
    hess: &DMatrix<f64>,
    s: &DVector<f64>,
    lam: &DVector<f64>,
    opts: &SolveOptions,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.n_vars();
    let m = problem.n_constraints();
    let mut active: Vec<bool> = (0..m).map(|i| lam[i] > s[i]).collect();
    let feas = opts.feas_tol * problem.gamma.max(1.0);
    for _ in 0..4 * m + 8 {
        let (pp, ll) = equality_solve(problem, hess, &active)?;
        let worst_dual = (0..m)
            .filter(|&i| active[i] && ll[i] < 0.0)
            .min_by(|&i, &j| ll[i].total_cmp(&ll[j]));
        let slack = (&problem.b * &pp).add_scalar(problem.gamma);
        let worst_primal = (0..m)
            .filter(|&i| !active[i] && slack[i] > feas)
            .max_by(|&i, &j| slack[i].total_cmp(&slack[j]));
        match (worst_dual, worst_primal) {
            (Some(i), _) if ll[i] < -opts.kkt_tol => active[i] = false,
            (_, Some(i)) if active.iter().filter(|a| **a).count() < n => active[i] = true,
            (_, Some(_)) => return None,
            _ => return Some((pp, ll.map(|l| l.max(0.0)))),
        }
    }
    None
}

fn equality_solve(
    problem: &PrecodeProblem,
    hess: &DMatrix<f64>,
    active: &[bool],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.n_vars();
    let rows: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
    let k = rows.len();
    let mut sys = DMatrix::zeros(n + k, n + k);
    sys.view_mut((0, 0), (n, n)).copy_from(hess);
    for (r, &i) in rows.iter().enumerate() {
        for c in 0..n {
            sys[(n + r, c)] = problem.b[(i, c)];
            sys[(c, n + r)] = problem.b[(i, c)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    for r in 0..k {
        rhs[n + r] = -problem.gamma;
    }
    let x = sys.lu().solve(&rhs)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut ll = DVector::zeros(active.len());
    for (r, &i) in rows.iter().enumerate() {
        ll[i] = x[n + r];
    }
    Some((x.rows(0, n).into_owned(), ll))
}

fn farkas_certificate(b: &DMatrix<f64>, lam: &DVector<f64>) -> bool {
    let total: f64 = lam.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return false;
    }
    let y = lam / total;
    (b.transpose() * y).amax() <= 1e-6 * b.amax().max(1.0)
}

fn finish(
    problem: &PrecodeProblem,
    p: DVector<f64>,
    lam: DVector<f64>,
    iterations: usize,
    status: SolveStatus,
    opts: &SolveOptions,
) -> PrecodeSolution {
    let report = verify_kkt(problem, p.as_slice(), lam.as_slice());
    let max_violation = if problem.n_constraints() == 0 {
        f64::NEG_INFINITY
    } else {
        (&problem.b * &p).add_scalar(problem.gamma).max()
    };
    let status = match status {
        SolveStatus::Optimal if report.passes(opts) => SolveStatus::Optimal,
        SolveStatus::Optimal => SolveStatus::MaxIter,
        other => other,
    };
    PrecodeSolution {
        objective: problem.objective(&p),
        p: p.as_slice().to_vec(),
        lambda: lam.as_slice().to_vec(),
        max_violation,
        kkt_residual: report.residual(),
        iterations,
        status,
    }
}
