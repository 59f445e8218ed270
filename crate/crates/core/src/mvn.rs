//! Rectangle probabilities of the multivariate normal distribution.
//!
//! Separation of variables with variable reordering, integrated by a
//! randomly shifted rank-1 lattice with the baker transform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const PRIMES: [f64; 16] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
];

/// Largest supported dimension.
pub const MAX_DIM: usize = PRIMES.len() + 1;

/// Axis-aligned box `lower <= y <= upper`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MvnBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl MvnBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(Error::InvalidParameter(format!(
                "box side {i} is empty: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Orthant of a sign pattern: `(0, inf)` for `+1`, `(-inf, 0)` for `-1`.
    pub fn orthant(signs: &[i8]) -> Self {
        let lower = signs
            .iter()
            .map(|&s| if s > 0 { 0.0 } else { f64::NEG_INFINITY })
            .collect();
        let upper = signs.iter().map(|&s| if s > 0 { f64::INFINITY } else { 0.0 }).collect();
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnOptions {
    /// Lattice points per randomization at the first pass.
    pub min_points: usize,
    /// Upper limit on lattice points per randomization.
    pub max_points: usize,
    pub randomizations: usize,
    /// Refinement stops once the standard error is below `abs_tol` or below
    /// `rel_tol * min(P, 1 - P)`.
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for MvnOptions {
    fn default() -> Self {
        Self {
            min_points: 1024,
            max_points: 1 << 16,
            randomizations: 8,
            abs_tol: 1e-6,
            rel_tol: 0.0,
            seed: 0x5eed_0f_2a11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnEstimate {
    pub probability: f64,
    /// `1 - probability`, accurate when the probability is close to one.
    pub complement: f64,
    /// Standard error over the randomizations.
    pub std_error: f64,
    /// Integrand evaluations used.
    pub evaluations: usize,
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn phi_c(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

fn density(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

fn quantile(p: f64) -> f64 {
    // statrs Normal(0, 1) never fails to construct.
    Normal::standard().inverse_cdf(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Mass of the standard normal on `(lo, hi)`, the mass outside it, and the
/// data needed to invert the truncated distribution. All without
/// cancellation and with a single `erfc` for half-infinite intervals.
#[derive(Clone, Copy)]
struct Interval {
    inside: f64,
    outside: f64,
    /// `Phi(lo)`, or `1 - Phi(lo)` when `upper_tail`.
    base: f64,
    upper_tail: bool,
}

fn interval(lo: f64, hi: f64) -> Interval {
    if hi == f64::INFINITY {
        if lo >= 0.0 {
            let t = phi_c(lo);
            Interval {
                inside: t,
                outside: 1.0 - t,
                base: t,
                upper_tail: true,
            }
        } else if lo == f64::NEG_INFINITY {
            Interval {
                inside: 1.0,
                outside: 0.0,
                base: 0.0,
                upper_tail: false,
            }
        } else {
            let t = phi(lo);
            Interval {
                inside: 1.0 - t,
                outside: t,
                base: t,
                upper_tail: false,
            }
        }
    } else if lo == f64::NEG_INFINITY {
        let (inside, outside) = if hi <= 0.0 {
            let t = phi(hi);
            (t, 1.0 - t)
        } else {
            let t = phi_c(hi);
            (1.0 - t, t)
        };
        Interval {
            inside,
            outside,
            base: 0.0,
            upper_tail: false,
        }
    } else if lo >= 0.0 {
        let (a, b) = (phi_c(lo), phi_c(hi));
        Interval {
            inside: (a - b).max(0.0),
            outside: (1.0 - a + b).min(1.0),
            base: a,
            upper_tail: true,
        }
    } else {
        let (a, b) = (phi(lo), phi_c(hi));
        let inside = if hi <= 0.0 { phi(hi) - a } else { 1.0 - a - b };
        Interval {
            inside: inside.max(0.0),
            outside: (a + b).min(1.0),
            base: a,
            upper_tail: false,
        }
    }
}

impl Interval {
    /// Draw from the standard normal restricted to the interval at uniform `u`.
    fn inverse(&self, u: f64) -> f64 {
        if self.upper_tail {
            -quantile(self.base - u * self.inside)
        } else {
            quantile(self.base + u * self.inside)
        }
    }
}

fn truncated_mean(lo: f64, hi: f64) -> f64 {
    let inside = interval(lo, hi).inside;
    if inside > 1e-300 {
        (density(lo) - density(hi)) / inside
    } else if lo > 0.0 {
        lo
    } else if hi < 0.0 {
        hi
    } else {
        0.0
    }
}

/// Cholesky factor and bounds after reordering.
struct Prepared {
    /// Row-major lower Cholesky factor.
    l: Vec<f64>,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn prepare(lower: &[f64], upper: &[f64], sigma: &DMatrix<f64>) -> Result<Prepared> {
    let m = lower.len();
    let mut c = sigma.clone();
    let mut a = lower.to_vec();
    let mut b = upper.to_vec();
    let mut l = DMatrix::<f64>::zeros(m, m);
    let mut y = vec![0.0; m];
    for i in 0..m {
        // Pick the remaining variable with the smallest conditional mass.
        let mut best = i;
        let mut best_mass = f64::INFINITY;
        for j in i..m {
            let var = c[(j, j)] - (0..i).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
            if var <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "covariance pivot {j} has conditional variance {var:e}"
                )));
            }
            let s: f64 = (0..i).map(|k| l[(j, k)] * y[k]).sum();
            let sd = var.sqrt();
            let mass = interval((a[j] - s) / sd, (b[j] - s) / sd).inside;
            if mass < best_mass {
                best_mass = mass;
                best = j;
            }
        }
        if best != i {
            c.swap_rows(i, best);
            c.swap_columns(i, best);
            l.swap_rows(i, best);
            a.swap(i, best);
            b.swap(i, best);
        }
        let var = c[(i, i)] - (0..i).map(|k| l[(i, k)] * l[(i, k)]).sum::<f64>();
        let d = var.sqrt();
        l[(i, i)] = d;
        for r in i + 1..m {
            l[(r, i)] = (c[(r, i)] - (0..i).map(|k| l[(r, k)] * l[(i, k)]).sum::<f64>()) / d;
        }
        let s: f64 = (0..i).map(|k| l[(i, k)] * y[k]).sum();
        y[i] = truncated_mean((a[i] - s) / d, (b[i] - s) / d);
    }
    Ok(Prepared {
        l: (0..m * m).map(|k| l[(k / m, k % m)]).collect(),
        m,
        lower: a,
        upper: b,
    })
}

/// Integrand at one point of `[0, 1]^(m-1)`; returns `(P, 1 - P)`.
fn integrand(prep: &Prepared, w: &[f64], y: &mut [f64]) -> (f64, f64) {
    let m = prep.m;
    let mut f = 1.0;
    let mut c = 0.0;
    for i in 0..m {
        let row = &prep.l[i * m..i * m + i + 1];
        let s: f64 = row[..i].iter().zip(y.iter()).map(|(l, y)| l * y).sum();
        let d = row[i];
        let iv = interval((prep.lower[i] - s) / d, (prep.upper[i] - s) / d);
        c += iv.outside * f;
        f *= iv.inside;
        if f == 0.0 {
            return (0.0, 1.0);
        }
        if i + 1 < m {
            y[i] = iv.inverse(w[i]);
        }
    }
    (f, c)
}

/// `P[lower <= Y <= upper]` for `Y ~ N(mu, sigma)`.
pub fn mvn_cdf(bx: &MvnBox, mu: &[f64], sigma: &DMatrix<f64>, opts: &MvnOptions) -> Result<MvnEstimate> {
    let m = bx.dim();
    if m == 0 || m > MAX_DIM {
        return Err(Error::Dimension(format!("dimension {m} outside 1..={MAX_DIM}")));
    }
    if mu.len() != m || sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::Dimension(format!(
            "box of dimension {m}, mean of length {}, covariance {}x{}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    for i in 0..m {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * (sigma[(i, i)] * sigma[(j, j)]).sqrt() {
                return Err(Error::NotPositiveDefinite("covariance is not symmetric".into()));
            }
        }
    }
    let lower: Vec<f64> = bx.lower.iter().zip(mu).map(|(l, u)| l - u).collect();
    let upper: Vec<f64> = bx.upper.iter().zip(mu).map(|(h, u)| h - u).collect();
    let prep = prepare(&lower, &upper, sigma)?;

    if m == 1 {
        let d = prep.l[0];
        let iv = interval(prep.lower[0] / d, prep.upper[0] / d);
        return Ok(MvnEstimate {
            probability: iv.inside,
            complement: iv.outside,
            std_error: 0.0,
            evaluations: 1,
        });
    }

    let dim = m - 1;
    let z: Vec<f64> = PRIMES[..dim].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let reps = opts.randomizations.max(2);
    let shifts: Vec<Vec<f64>> = (0..reps)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut n = opts.min_points.max(1);
    let mut evaluations = 0;
    let mut w = vec![0.0; dim];
    let mut y = vec![0.0; m];
    loop {
        let mut means_p = Vec::with_capacity(reps);
        let mut means_c = Vec::with_capacity(reps);
        for shift in &shifts {
            let (mut sp, mut sc) = (0.0, 0.0);
            for k in 1..=n {
                for (j, wj) in w.iter_mut().enumerate() {
                    let x = (k as f64 * z[j] + shift[j]).fract();
                    *wj = 1.0 - (2.0 * x - 1.0).abs();
                }
                let (p, c) = integrand(&prep, &w, &mut y);
                sp += p;
                sc += c;
            }
            means_p.push(sp / n as f64);
            means_c.push(sc / n as f64);
        }
        evaluations += n * reps;
        let r = reps as f64;
        let p = means_p.iter().sum::<f64>() / r;
        let c = means_c.iter().sum::<f64>() / r;
        let var = means_c.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / (r - 1.0);
        let se = (var / r).sqrt();
        let target = opts.abs_tol.max(opts.rel_tol * p.min(c));
        if se <= target || 2 * n > opts.max_points {
            return Ok(MvnEstimate {
                probability: p.clamp(0.0, 1.0),
                complement: c.clamp(0.0, 1.0),
                std_error: se,
                evaluations,
            });
        }
        n *= 2;
    }
}
