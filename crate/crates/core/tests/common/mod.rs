//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod regions;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zxqos_core::sim::quantize;
use zxqos_core::zx::encode;
use zxqos_core::{LinkChannel, PrecodeProblem, QosDesigner, SolveOptions, SystemMatrices, UserFrames, ZxAlphabet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Optimum of `min p^T W^T W p, B p <= -gamma` by enumerating every active
/// set of at most `n` rows. `None` when no active set is KKT-consistent.
pub fn brute_force_qp(problem: &PrecodeProblem) -> Option<(DVector<f64>, f64)> {
    let n = problem.w.ncols();
    let m = problem.b.nrows();
    let q = problem.w.transpose() * &problem.w;
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..1 << m {
        let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = rows.len();
        if k > n {
            continue;
        }
        // [2Q  B_A^T; B_A  0] [p; lambda] = [0; -gamma]
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&(&q * 2.0));
        for (r, &i) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + r, c)] = problem.b[(i, c)];
                kkt[(c, n + r)] = problem.b[(i, c)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(n, k).fill(-problem.gamma);
        let Some(x) = kkt.full_piv_lu().solve(&rhs) else {
            continue;
        };
        let p = x.rows(0, n).into_owned();
        let dual_ok = x.rows(n, k).iter().all(|&l| l >= -1e-9);
        let primal_ok = (&problem.b * &p)
            .iter()
            .all(|&v| v <= -problem.gamma + 1e-9 * problem.gamma.max(1.0));
        if dual_ok && primal_ok {
            let obj = p.dot(&(&q * &p));
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((p, obj));
            }
        }
    }
    best
}

/// Random feasible instance with `n` variables and `m` constraints.
pub fn random_qp(rng: &mut ChaCha8Rng, n: usize, m: usize, gamma: f64) -> PrecodeProblem {
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let w = DMatrix::from_fn(n + 2, n, |_, _| normal(rng));
    let mut b = DMatrix::from_fn(m, n, |_, _| normal(rng));
    let p0 = DVector::from_fn(n, |_, _| normal(rng));
    let d = &b * &p0;
    for i in 0..m {
        if d[i] > 0.0 {
            b.row_mut(i).neg_mut();
        }
    }
    PrecodeProblem::new(w, b, gamma).unwrap()
}

/// Plain Monte Carlo estimate of `P(lower < X < upper)`, `X ~ N(mu, sigma)`,
/// with its standard error.
pub fn mc_box_probability(
    lower: &[f64],
    upper: &[f64],
    mu: &[f64],
    sigma: &DMatrix<f64>,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let m = mu.len();
    let l = sigma.clone().cholesky().expect("positive definite").l();
    let mut rng = rng(seed);
    let mut z = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..draws {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut inside = true;
        for i in 0..m {
            let mut x = mu[i];
            for j in 0..=i {
                x += l[(i, j)] * z[j];
            }
            if !(x > lower[i] && x < upper[i]) {
                inside = false;
                break;
            }
        }
        hits += inside as usize;
    }
    let p = hits as f64 / draws as f64;
    (p, (p * (1.0 - p) / draws as f64).sqrt())
}

/// Random correlation-like covariance with unit-order diagonal.
pub fn random_covariance(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(m, m + 2, |_, _| StandardNormal.sample(rng));
    let s = &a * a.transpose() / (m + 2) as f64;
    let d = DMatrix::from_diagonal(&s.diagonal().map(|x| 1.0 / x.sqrt()));
    let mut c = &d * s * &d;
    for i in 0..m {
        c[(i, i)] += 0.05;
    }
    c
}

/// Random complex channel with i.i.d. unit-variance entries.
pub fn random_channel(rng: &mut ChaCha8Rng, n_u: usize, n_t: usize) -> DMatrix<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(n_u, n_t, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Result of one noiseless frame check.
pub struct NoiselessCheck {
    pub patterns_match: bool,
    /// Smallest `c_out_t y_t / gamma` over all samples, users and quadratures.
    pub min_margin_ratio: f64,
}

/// Designs QoS precoders for random payloads, forms the noiseless receive
/// signal `H P_sp V U p` and compares its signs with the targets.
pub fn noiseless_frame(
    rng: &mut ChaCha8Rng,
    sys: &std::sync::Arc<SystemMatrices>,
    h: DMatrix<Complex64>,
    gamma: f64,
) -> NoiselessCheck {
    let alphabet = ZxAlphabet::for_oversampling(sys.dims.m_rx).unwrap();
    noiseless_frame_with(rng, sys, &alphabet, h, gamma)
}

/// As [`noiseless_frame`] with an explicit alphabet, e.g. unpaired symbols
/// for odd frame lengths at two samples per symbol.
pub fn noiseless_frame_with(
    rng: &mut ChaCha8Rng,
    sys: &std::sync::Arc<SystemMatrices>,
    alphabet: &ZxAlphabet,
    h: DMatrix<Complex64>,
    gamma: f64,
) -> NoiselessCheck {
    let blocks = sys.dims.n_symbols / alphabet.block_symbols();
    let n_u = h.nrows();
    let link = LinkChannel::new(h).unwrap();
    let frame = |rng: &mut ChaCha8Rng| {
        let symbols: Vec<usize> = (0..blocks).map(|_| rng.random_range(0..alphabet.len())).collect();
        let rho0 = if rng.random_bool(0.5) { 1 } else { -1 };
        encode(&symbols, rho0, alphabet).unwrap()
    };
    let frames: Vec<UserFrames> = (0..n_u)
        .map(|_| UserFrames {
            in_phase: frame(rng),
            quadrature: frame(rng),
        })
        .collect();
    let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
    let pre = designer.precode(&frames, link.beta, gamma).unwrap();
    // Noiseless receive signal from the dense matrices, independent of the
    // simulator's own signal path.
    let vu = sys.vu.map(|x| Complex64::new(x, 0.0));
    let px = DMatrix::from_fn(sys.vu.ncols(), n_u, |r, c| pre.users[c].complex()[r]);
    let y = (vu * px) * (link.h * link.p_sp).transpose();
    let mut ok = true;
    let mut ratio = f64::INFINITY;
    for k in 0..n_u {
        let re: Vec<f64> = y.column(k).iter().map(|v| v.re).collect();
        let im: Vec<f64> = y.column(k).iter().map(|v| v.im).collect();
        for (vals, target) in [(re, &frames[k].in_phase.c_out), (im, &frames[k].quadrature.c_out)] {
            ok &= quantize(&vals) == *target;
            for (v, c) in vals.iter().zip(target.iter()) {
                ratio = ratio.min(v * f64::from(*c) / gamma);
            }
        }
    }
    NoiselessCheck {
        patterns_match: ok,
        min_margin_ratio: ratio,
    }
}
