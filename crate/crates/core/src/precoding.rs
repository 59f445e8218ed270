//! Spatial zero-forcing and per-user QoS temporal precoding.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Quadrature, Result};
use crate::qp::{solve, PrecodeProblem, PrecodeSolution, SolveOptions, SolveStatus};
use crate::waveform::SystemMatrices;
use crate::zx::{Sign, ZxFrame};

/// Largest condition number of `H` accepted by [`zf_precoder`].
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPrecoder {
    /// `H^H (H H^H)^-1`, `N_t x N_u`.
    pub p_zf: DMatrix<Complex64>,
    pub c_zf: f64,
}

impl SpatialPrecoder {
    /// `P_sp = c_zf P_zf`
    pub fn p_sp(&self) -> DMatrix<Complex64> {
        self.p_zf.map(|x| x * self.c_zf)
    }

    /// Real gain seen by every user after zero-forcing.
    pub fn beta(&self) -> f64 {
        self.c_zf
    }
}

pub fn zf_precoder(h: &DMatrix<Complex64>) -> Result<SpatialPrecoder> {
    let (n_u, n_t) = h.shape();
    if n_u == 0 || n_t < n_u {
        return Err(Error::Dimension(format!(
            "zero-forcing needs N_t >= N_u >= 1, got {n_u}x{n_t}"
        )));
    }
    let sv = h.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let hh = h.adjoint();
    let gram_inv = (h * &hh).try_inverse().ok_or(Error::IllConditioned(f64::INFINITY))?;
    let p_zf = &hh * &gram_inv;
    let trace = gram_inv.trace().re;
    Ok(SpatialPrecoder {
        p_zf,
        c_zf: (n_u as f64 / trace).sqrt(),
    })
}

/// Constraint data for one user and quadrature: `B = -beta diag(c_out) V U`
/// with objective matrix `W = G_Tx^T U`.
pub fn build_qos_problem(c_out: &[Sign], sys: &SystemMatrices, beta: f64, gamma: f64) -> Result<PrecodeProblem> {
    let vu = &sys.vu;
    if c_out.len() != vu.nrows() {
        return Err(Error::Dimension(format!(
            "c_out has {} samples, expected {}",
            c_out.len(),
            vu.nrows()
        )));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if let Some(r) = (0..vu.nrows()).find(|&r| vu.row(r).iter().all(|&x| x == 0.0)) {
        return Err(Error::Infeasible(format!("row {r} of V U is zero")));
    }
    let mut b = vu.clone();
    for (r, &c) in c_out.iter().enumerate() {
        let f = -beta * f64::from(c);
        b.row_mut(r).scale_mut(f);
    }
    PrecodeProblem::new(sys.w.clone(), b, gamma)
}

/// Frames carried by one user on its two quadratures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserFrames {
    pub in_phase: ZxFrame,
    pub quadrature: ZxFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrecoder {
    pub in_phase: PrecodeSolution,
    pub quadrature: PrecodeSolution,
}

impl UserPrecoder {
    /// `p_I + j p_Q`
    pub fn complex(&self) -> Vec<Complex64> {
        self.in_phase
            .p
            .iter()
            .zip(&self.quadrature.p)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalPrecoder {
    pub users: Vec<UserPrecoder>,
    pub beta: f64,
    pub gamma: f64,
}

impl TemporalPrecoder {
    pub fn complex_vectors(&self) -> Vec<Vec<Complex64>> {
        self.users.iter().map(UserPrecoder::complex).collect()
    }
}

/// Solves the per-quadrature problems of every user.
///
/// The problem is positively homogeneous in `gamma / beta`, so only the
/// `beta = gamma = 1` instance is solved for each distinct `c_out` and the
/// result is rescaled. Unit solutions are memoized.
#[derive(Debug)]
pub struct QosDesigner {
    sys: Arc<SystemMatrices>,
    opts: SolveOptions,
    cache: Mutex<HashMap<Vec<Sign>, Arc<PrecodeSolution>>>,
    capacity: usize,
}

impl QosDesigner {
    pub fn new(sys: Arc<SystemMatrices>, opts: SolveOptions) -> Self {
        Self {
            sys,
            opts,
            cache: Mutex::new(HashMap::new()),
            capacity: 4096,
        }
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.sys
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    /// Optimal precoder for `B = -diag(c_out) V U`, `gamma = 1`.
    pub fn unit_solution(&self, c_out: &[Sign]) -> Result<Arc<PrecodeSolution>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(c_out) {
            return Ok(hit.clone());
        }
        let problem = build_qos_problem(c_out, &self.sys, 1.0, 1.0)?;
        let sol = solve(&problem, &self.opts);
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => return Err(Error::Infeasible("QoS constraints cannot be met".into())),
            SolveStatus::MaxIter => {
                return Err(Error::MaxIter {
                    iterations: sol.iterations,
                    max_violation: sol.max_violation,
                    kkt_residual: sol.kkt_residual,
                })
            }
        }
        let sol = Arc::new(sol);
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() < self.capacity {
            cache.insert(c_out.to_vec(), sol.clone());
        }
        Ok(sol)
    }

    /// Solution for one quadrature at gain `beta` and threshold `gamma`.
    pub fn solve_pattern(&self, c_out: &[Sign], beta: f64, gamma: f64) -> Result<PrecodeSolution> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let unit = self.unit_solution(c_out)?;
        Ok(unit.scaled(gamma / beta))
    }

    pub fn precode(&self, frames: &[UserFrames], beta: f64, gamma: f64) -> Result<TemporalPrecoder> {
        let users = frames
            .iter()
            .enumerate()
            .map(|(user, f)| {
                let wrap = |quadrature| {
                    move |source| Error::User {
                        user,
                        quadrature,
                        source: Box::new(source),
                    }
                };
                Ok(UserPrecoder {
                    in_phase: self
                        .solve_pattern(&f.in_phase.c_out, beta, gamma)
                        .map_err(wrap(Quadrature::I))?,
                    quadrature: self
                        .solve_pattern(&f.quadrature.c_out, beta, gamma)
                        .map_err(wrap(Quadrature::Q))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TemporalPrecoder { users, beta, gamma })
    }
}

/// One-shot form of [`QosDesigner::precode`] with default solver options.
pub fn qos_precode(frames: &[UserFrames], sys: Arc<SystemMatrices>, beta: f64, gamma: f64) -> Result<TemporalPrecoder> {
    QosDesigner::new(sys, SolveOptions::default()).precode(frames, beta, gamma)
}

/// `E_0k = ||p_sp_k||^2 (||W p_I||^2 + ||W p_Q||^2)`
pub fn user_energy(p_sp_k: &[Complex64], w: &DMatrix<f64>, p_i: &[f64], p_q: &[f64]) -> f64 {
    let spatial: f64 = p_sp_k.iter().map(|x| x.norm_sqr()).sum();
    let ei = (w * DVector::from_column_slice(p_i)).norm_squared();
    let eq = (w * DVector::from_column_slice(p_q)).norm_squared();
    spatial * (ei + eq)
}

/// `trace(P_sp R R^H P_sp^H)` where row `k` of `R` is `(W p_k)^T`.
pub fn total_transmit_energy(p_sp: &DMatrix<Complex64>, p: &[Vec<Complex64>], w: &DMatrix<f64>) -> Result<f64> {
    if p_sp.ncols() != p.len() {
        return Err(Error::Dimension(format!(
            "P_sp serves {} users, got {} precoding vectors",
            p_sp.ncols(),
            p.len()
        )));
    }
    let wc = w.map(|x| Complex64::new(x, 0.0));
    let mut r = DMatrix::<Complex64>::zeros(p.len(), w.nrows());
    for (k, pk) in p.iter().enumerate() {
        if pk.len() != w.ncols() {
            return Err(Error::Dimension(format!(
                "precoding vector {k} has length {}, expected {}",
                pk.len(),
                w.ncols()
            )));
        }
        let s = &wc * DVector::from_column_slice(pk);
        r.row_mut(k).copy_from(&s.transpose());
    }
    Ok((p_sp * r).norm_squared())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    pub linear: f64,
    pub db: f64,
}

/// `E_Tx / (N_q N_0 (1 + rolloff))`
pub fn snr_required(e_tx: f64, n_q: usize, n0: f64, rolloff: f64) -> Snr {
    let linear = e_tx / (n_q as f64 * n0 * (1.0 + rolloff));
    Snr {
        linear,
        db: 10.0 * linear.log10(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::SystemDims;
    use crate::zx::{encode, ZxAlphabet};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zf_identity_and_scaled_identity() {
        let zf = zf_precoder(&DMatrix::from_element(1, 1, c(1.0, 0.0))).unwrap();
        assert!((zf.p_zf[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((zf.c_zf - 1.0).abs() < 1e-14);
        let h = DMatrix::from_diagonal_element(2, 2, c(2.0, 0.0));
        let zf = zf_precoder(&h).unwrap();
        assert!((zf.p_zf.clone() - DMatrix::from_diagonal_element(2, 2, c(0.5, 0.0))).norm() < 1e-14);
        assert!((zf.c_zf - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zf_right_inverse() {
        let h = DMatrix::from_row_slice(
            2,
            4,
            &[
                c(0.3, -1.1),
                c(0.7, 0.2),
                c(-0.4, 0.9),
                c(1.2, 0.1),
                c(-0.8, 0.5),
                c(0.05, -0.6),
                c(0.9, 0.9),
                c(-0.2, -0.3),
            ],
        );
        let zf = zf_precoder(&h).unwrap();
        let id = &h * &zf.p_zf;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-10);
        let inv = (&h * h.adjoint()).try_inverse().unwrap();
        assert!((zf.c_zf - (2.0 / inv.trace().re).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zf_rejects_rank_deficient() {
        let h = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        assert!(matches!(zf_precoder(&h), Err(Error::IllConditioned(_))));
        assert!(zf_precoder(&DMatrix::from_element(2, 1, c(1.0, 0.0))).is_err());
    }

    fn siso(n: usize, m_rx: usize) -> Arc<SystemMatrices> {
        Arc::new(SystemMatrices::new(SystemDims::siso(n, m_rx).unwrap(), 0.22, 0.22).unwrap())
    }

    #[test]
    fn sign_flip_flips_row() {
        let sys = siso(2, 3);
        let alpha = ZxAlphabet::single(3).unwrap();
        let f = encode(&[2, 1], 1, &alpha).unwrap();
        let b0 = build_qos_problem(&f.c_out, &sys, 1.3, 1.0).unwrap().b;
        let mut flipped = f.c_out.clone();
        flipped[4] = -flipped[4];
        let b1 = build_qos_problem(&flipped, &sys, 1.3, 1.0).unwrap().b;
        for r in 0..b0.nrows() {
            let s = if r == 4 { -1.0 } else { 1.0 };
            assert_eq!(b1.row(r).into_owned(), b0.row(r) * s);
        }
        let b2 = build_qos_problem(&f.c_out, &sys, 2.6, 1.0).unwrap().b;
        assert!((b2 - b0 * 2.0).norm() < 1e-12);
    }

    #[test]
    fn scalar_chain_hand_solution() {
        // N = 1, M_Rx = M_Tx = 1: V U is the symmetric 2x2 matrix [[v0, v1], [v1, v0]].
        let sys = siso(1, 1);
        let v0 = sys.vu[(0, 0)];
        let v1 = sys.vu[(0, 1)];
        assert!((sys.vu[(1, 0)] - v1).abs() < 1e-14);
        let beta = 1.7;
        let gamma = 2.0;
        let sol = solve(
            &build_qos_problem(&[1, 1], &sys, beta, gamma).unwrap(),
            &SolveOptions::default(),
        );
        assert_eq!(sol.status, SolveStatus::Optimal);
        // By symmetry both entries are equal and both constraints are active.
        let expect = gamma / (beta * (v0 + v1));
        assert!((sol.p[0] - expect).abs() < 1e-6 * expect, "{:?} vs {expect}", sol.p);
        assert!((sol.p[1] - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn noiseless_constraints_hold_with_active_sample() {
        let sys = siso(4, 3);
        let alpha = ZxAlphabet::single(3).unwrap();
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let frames = [UserFrames {
            in_phase: encode(&[3, 1, 2, 0], 1, &alpha).unwrap(),
            quadrature: encode(&[0, 0, 1, 3], -1, &alpha).unwrap(),
        }];
        let beta = 0.8;
        let gamma = 2.65;
        let tp = designer.precode(&frames, beta, gamma).unwrap();
        for (sol, frame) in [
            (&tp.users[0].in_phase, &frames[0].in_phase),
            (&tp.users[0].quadrature, &frames[0].quadrature),
        ] {
            let y = sys.receive(&sol.p);
            let margins: Vec<f64> = y
                .iter()
                .zip(&frame.c_out)
                .map(|(v, &c)| beta * v * f64::from(c))
                .collect();
            let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= gamma * (1.0 - 1e-6) && min <= gamma * (1.0 + 1e-6), "{min}");
        }
    }

    #[test]
    fn zero_gamma_zero_energy() {
        let sys = siso(2, 2);
        let alpha = ZxAlphabet::single(2).unwrap();
        let frame = encode(&[1, 2], 1, &alpha).unwrap();
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let sol = designer.solve_pattern(&frame.c_out, 1.0, 0.0).unwrap();
        assert!(sol.p.iter().all(|&x| x == 0.0));
        assert_eq!(user_energy(&[c(1.0, 0.0)], &sys.w, &sol.p, &sol.p), 0.0);
    }

    #[test]
    fn energies_are_quadratic_and_consistent() {
        let sys = siso(3, 2);
        let alpha = ZxAlphabet::single(2).unwrap();
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let frames = [UserFrames {
            in_phase: encode(&[1, 2, 0], 1, &alpha).unwrap(),
            quadrature: encode(&[2, 2, 1], 1, &alpha).unwrap(),
        }];
        let t1 = designer.precode(&frames, 1.0, 1.0).unwrap();
        let t2 = designer.precode(&frames, 1.0, 2.0).unwrap();
        let p_sp = DMatrix::from_element(1, 1, c(1.0, 0.0));
        let e1 = total_transmit_energy(&p_sp, &t1.complex_vectors(), &sys.w).unwrap();
        let e2 = total_transmit_energy(&p_sp, &t2.complex_vectors(), &sys.w).unwrap();
        assert!((e2 - 4.0 * e1).abs() < 1e-9 * e2);
        let u = &t1.users[0];
        let e0 = user_energy(&[c(1.0, 0.0)], &sys.w, &u.in_phase.p, &u.quadrature.p);
        assert!((e0 - e1).abs() < 1e-12 * e1);
        // Direct waveform energy: sum of squared transmit samples.
        let gtx = sys.gtx.to_dense();
        let up = &sys.u * DVector::from_column_slice(&u.in_phase.p);
        let uq = &sys.u * DVector::from_column_slice(&u.quadrature.p);
        let direct = (gtx.transpose() * up).norm_squared() + (gtx.transpose() * uq).norm_squared();
        assert!((direct - e0).abs() < 1e-10 * e0);
        let doubled: Vec<f64> = u.in_phase.p.iter().map(|x| 2.0 * x).collect();
        let zeros = vec![0.0; doubled.len()];
        let ea = user_energy(&[c(1.0, 0.0)], &sys.w, &u.in_phase.p, &zeros);
        let eb = user_energy(&[c(1.0, 0.0)], &sys.w, &doubled, &zeros);
        assert!((eb - 4.0 * ea).abs() < 1e-12 * eb);
    }

    #[test]
    fn snr_reference_points() {
        let s = snr_required(13.0 * 1.22, 13, 1.0, 0.22);
        assert!((s.linear - 1.0).abs() < 1e-12 && s.db.abs() < 1e-10);
        let d = snr_required(2.0 * 13.0 * 1.22, 13, 1.0, 0.22);
        assert!((d.db - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn cache_results_match_direct_solve() {
        let sys = siso(2, 3);
        let alpha = ZxAlphabet::single(3).unwrap();
        let f = encode(&[1, 3], 1, &alpha).unwrap();
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let a = designer.solve_pattern(&f.c_out, 0.9, 3.0).unwrap();
        let b = designer.solve_pattern(&f.c_out, 0.9, 3.0).unwrap();
        assert_eq!(a, b);
        let direct = solve(
            &build_qos_problem(&f.c_out, &sys, 0.9, 3.0).unwrap(),
            &SolveOptions::default(),
        );
        assert!((a.objective - direct.objective).abs() < 1e-6 * direct.objective);
    }
}
