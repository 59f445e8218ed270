//! Semi-analytical SER/BER upper bound.
//!
//! Every sample of a block is placed at distance exactly `gamma` from the
//! threshold, on the side of the transmitted codeword. The probability that
//! the detector returns the right symbol is a sum of Gaussian orthant
//! probabilities over the sign patterns mapped to that symbol.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::mvn::{mvn_cdf, MvnBox, MvnEstimate, MvnOptions};
use crate::waveform::{
    build_grx, noise_covariance, BandedToeplitz, Normalization, PulseShape, SystemDims, DEFAULT_ROLLOFF,
};
use crate::zx::{codeword, detect_block, Sign, ZxAlphabet};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRegion {
    pub symbol: usize,
    pub rho: Sign,
    /// Noiseless block `gamma [rho, codeword]`.
    pub mu: Vec<f64>,
    /// Sign patterns detected as `symbol`, the noiseless one first.
    pub patterns: Vec<Vec<Sign>>,
    pub boxes: Vec<MvnBox>,
}

/// Assigns each of the `2^(m-1)` block patterns starting with `rho` to the
/// symbol the Hamming detector returns for it.
pub fn enumerate_detection_regions(alphabet: &ZxAlphabet, rho: Sign, gamma: f64) -> Result<Vec<DetectionRegion>> {
    if rho != 1 && rho != -1 {
        return Err(Error::InvalidParameter(format!("rho must be +1 or -1, got {rho}")));
    }
    let m = alphabet.block_len() + 1;
    let mut regions = (0..alphabet.len())
        .map(|symbol| {
            let mut word = vec![rho];
            word.extend(codeword(symbol, rho, alphabet)?);
            Ok(DetectionRegion {
                symbol,
                rho,
                mu: word.iter().map(|&s| gamma * f64::from(s)).collect(),
                patterns: vec![word],
                boxes: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for bits in 0..1usize << (m - 1) {
        let mut z = Vec::with_capacity(m);
        z.push(rho);
        z.extend((0..m - 1).map(|k| if bits >> k & 1 == 1 { -rho } else { rho }));
        let det = detect_block(&z, alphabet)?;
        let region = &mut regions[det.detected_symbol];
        if z != region.patterns[0] {
            region.patterns.push(z);
        }
    }
    for r in &mut regions {
        r.boxes = r.patterns.iter().map(|p| MvnBox::orthant(p)).collect();
    }
    Ok(regions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Covariance of receive-filtered white noise.
    #[default]
    Correlated,
    /// `sigma2 I`.
    White,
}

impl std::str::FromStr for SigmaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correlated" => Ok(Self::Correlated),
            "white" => Ok(Self::White),
            other => Err(Error::InvalidParameter(format!(
                "unknown sigma mode {other:?}, expected correlated or white"
            ))),
        }
    }
}

/// Covariance of `m` consecutive samples in the middle of a frame filtered by `grx`.
pub fn block_covariance(grx: &BandedToeplitz, m: usize, sigma2: f64) -> Result<DMatrix<f64>> {
    if m > grx.rows {
        return Err(Error::Dimension(format!(
            "block of {m} samples exceeds the {} receive samples",
            grx.rows
        )));
    }
    let start = (grx.rows - m) / 2;
    noise_covariance(grx, start..start + m, sigma2)
}

/// Block noise covariance for the bound at oversampling `m_rx`.
pub fn bound_covariance(alphabet: &ZxAlphabet, sigma2: f64, mode: SigmaMode) -> Result<DMatrix<f64>> {
    let m = alphabet.block_len() + 1;
    match mode {
        SigmaMode::White => {
            if !(sigma2 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "noise variance {sigma2} must be positive"
                )));
            }
            Ok(DMatrix::identity(m, m) * sigma2)
        }
        SigmaMode::Correlated => {
            // One-block frame: the detection window is the whole frame.
            let dims = SystemDims::siso(alphabet.block_symbols(), alphabet.m_rx())?;
            let rx = PulseShape::root_raised_cosine(DEFAULT_ROLLOFF, dims.m_rx, dims.n_symbols)
                .with_normalization(Normalization::Analytic);
            let grx = build_grx(&dims, &rx)?;
            block_covariance(&grx, m, sigma2)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerBoundReport {
    pub gamma: f64,
    /// Per-sample noise variance (diagonal of the block covariance).
    pub sigma2: f64,
    pub m_rx: usize,
    pub block_symbols: usize,
    /// Correct-detection probability per alphabet entry.
    pub p_correct: Vec<f64>,
    /// `1 - p_correct`, computed without cancellation.
    pub p_error: Vec<f64>,
    pub ser_ub: f64,
    pub ber_ub: f64,
    pub bits_per_symbol: f64,
    /// Standard error of `ser_ub` from the integration.
    pub cdf_error_estimate: f64,
}

/// Regions and covariance of one bound configuration; evaluates the bound at
/// any `gamma`.
#[derive(Debug, Clone)]
pub struct SerBoundModel {
    alphabet: ZxAlphabet,
    sigma: DMatrix<f64>,
    regions: Vec<DetectionRegion>,
    mvn: MvnOptions,
}

impl SerBoundModel {
    pub fn new(alphabet: ZxAlphabet, sigma: DMatrix<f64>) -> Result<Self> {
        let m = alphabet.block_len() + 1;
        if sigma.nrows() != m || sigma.ncols() != m {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, block has {m} samples",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("block covariance".into()));
        }
        let regions = enumerate_detection_regions(&alphabet, 1, 1.0)?;
        Ok(Self {
            alphabet,
            sigma,
            regions,
            mvn: Self::default_mvn_options(),
        })
    }

    /// A fixed lattice size, so that the bound is a smooth deterministic
    /// function of `gamma` and can be inverted by root finding.
    pub fn default_mvn_options() -> MvnOptions {
        MvnOptions {
            min_points: 1024,
            max_points: 1024,
            ..MvnOptions::default()
        }
    }

    pub fn with_mvn_options(mut self, mvn: MvnOptions) -> Self {
        self.mvn = mvn;
        self
    }

    pub fn alphabet(&self) -> &ZxAlphabet {
        &self.alphabet
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Regions for `rho = +1` at unit `gamma`.
    pub fn regions(&self) -> &[DetectionRegion] {
        &self.regions
    }

    pub fn evaluate(&self, gamma: f64) -> Result<SerBoundReport> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        let bits_per_symbol = self.alphabet.bits_per_symbol().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "alphabet of {} entries has no Gray labelling",
                self.alphabet.len()
            ))
        })?;
        let per_symbol = self
            .regions
            .par_iter()
            .map(|r| {
                let mu: Vec<f64> = r.mu.iter().map(|x| x * gamma).collect();
                // The complement of the noiseless orthant, split by the first
                // sample on the wrong side. Each piece is a small probability,
                // which the integrator resolves in relative terms.
                let word = &r.patterns[0];
                let mut err = 0.0;
                let mut var = 0.0;
                for i in 0..word.len() {
                    let mut signs = word[..=i].to_vec();
                    signs[i] = -signs[i];
                    let sub = self.sigma.view((0, 0), (i + 1, i + 1)).into_owned();
                    let e = mvn_cdf(&MvnBox::orthant(&signs), &mu[..=i], &sub, &self.mvn)?;
                    err += e.probability;
                    var += e.std_error * e.std_error;
                }
                for b in &r.boxes[1..] {
                    let e = mvn_cdf(b, &mu, &self.sigma, &self.mvn)?;
                    err -= e.probability;
                    var += e.std_error * e.std_error;
                }
                Ok((err.clamp(0.0, 1.0), var))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = per_symbol.len() as f64;
        let p_error: Vec<f64> = per_symbol.iter().map(|x| x.0).collect();
        let ser_ub = p_error.iter().sum::<f64>() / n;
        let se = per_symbol.iter().map(|x| x.1).sum::<f64>().sqrt() / n;
        Ok(SerBoundReport {
            gamma,
            sigma2: self.sigma[(0, 0)],
            m_rx: self.alphabet.m_rx(),
            block_symbols: self.alphabet.block_symbols(),
            p_correct: p_error.iter().map(|e| 1.0 - e).collect(),
            p_error,
            ser_ub,
            ber_ub: ser_ub / bits_per_symbol,
            bits_per_symbol,
            cdf_error_estimate: se,
        })
    }

    /// Smallest `gamma` whose bound meets `target` to 0.1 % relative.
    pub fn gamma_for_ser(&self, target: f64) -> Result<f64> {
        let at_zero = self.evaluate(0.0)?.ser_ub;
        if !(target > 0.0 && target < at_zero) {
            return Err(Error::TargetOutOfRange {
                target,
                lo: 0.0,
                hi: at_zero,
            });
        }
        let f = |g: f64| -> Result<f64> { Ok(self.evaluate(g)?.ser_ub.max(f64::MIN_POSITIVE).ln() - target.ln()) };
        let tol = (1.0f64 + 1e-3).ln();
        let (mut lo, mut hi) = (0.0, 8.0);
        let mut f_lo = at_zero.ln() - target.ln();
        let mut f_hi = f(hi)?;
        while f_hi > 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            if hi > 1e3 {
                return Err(Error::TargetOutOfRange {
                    target,
                    lo: 0.0,
                    hi: at_zero,
                });
            }
            f_hi = f(hi)?;
        }
        if f_hi.abs() <= tol {
            return Ok(hi);
        }
        // Illinois false position on log SER, with bisection as a guard.
        let mut side = 0i8;
        for _ in 0..200 {
            let mut g = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(g > lo && g < hi) {
                g = 0.5 * (lo + hi);
            }
            let fg = f(g)?;
            if fg.abs() <= tol || hi - lo < 1e-12 {
                return Ok(g);
            }
            if fg > 0.0 {
                lo = g;
                f_lo = fg;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = g;
                f_hi = fg;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn ser_upper_bound(gamma: f64, sigma: &DMatrix<f64>, alphabet: &ZxAlphabet) -> Result<SerBoundReport> {
    SerBoundModel::new(alphabet.clone(), sigma.clone())?.evaluate(gamma)
}

pub fn gamma_for_ser(target_ser: f64, sigma: &DMatrix<f64>, alphabet: &ZxAlphabet) -> Result<f64> {
    SerBoundModel::new(alphabet.clone(), sigma.clone())?.gamma_for_ser(target_ser)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patterns(regions: &[DetectionRegion], symbol: usize) -> Vec<Vec<Sign>> {
        let mut p = regions[symbol].patterns.clone();
        p.sort();
        p
    }

    #[test]
    fn single_symbol_regions() {
        let a = ZxAlphabet::single(3).unwrap();
        let r = enumerate_detection_regions(&a, 1, 2.0).unwrap();
        assert_eq!(r[2].patterns, vec![vec![1, 1, -1, -1]]);
        let mut b1 = vec![vec![1, 1, 1, 1], vec![1, 1, -1, 1], vec![1, -1, 1, 1]];
        b1.sort();
        assert_eq!(patterns(&r, 0), b1);
        assert_eq!(r[3].mu, vec![2.0, -2.0, -2.0, -2.0]);
        let total: usize = r.iter().map(|x| x.patterns.len()).sum();
        assert_eq!(total, 8);
    }

    #[test]
    fn negative_branch_mirrors_positive() {
        for a in [ZxAlphabet::single(3).unwrap(), ZxAlphabet::paired(2).unwrap()] {
            let pos = enumerate_detection_regions(&a, 1, 1.5).unwrap();
            let neg = enumerate_detection_regions(&a, -1, 1.5).unwrap();
            for (p, n) in pos.iter().zip(&neg) {
                let flipped: Vec<Vec<Sign>> = p.patterns.iter().map(|z| z.iter().map(|s| -s).collect()).collect();
                assert_eq!(flipped, n.patterns);
                let mu: Vec<f64> = p.mu.iter().map(|x| -x).collect();
                assert_eq!(mu, n.mu);
            }
        }
    }

    #[test]
    fn both_branches_partition_all_patterns() {
        let a = ZxAlphabet::paired(2).unwrap();
        let mut all: Vec<Vec<Sign>> = [1, -1]
            .iter()
            .flat_map(|&rho| enumerate_detection_regions(&a, rho, 1.0).unwrap())
            .flat_map(|r| r.patterns)
            .collect();
        assert_eq!(all.len(), 32);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 32);
    }

    #[test]
    fn total_probability_is_one() {
        let a = ZxAlphabet::single(3).unwrap();
        let sigma = bound_covariance(&a, 1.0, SigmaMode::Correlated).unwrap();
        let mu = [1.3, -0.4, 0.7, -2.0];
        let opts = MvnOptions::default();
        let mut total = 0.0;
        for rho in [1, -1] {
            for r in enumerate_detection_regions(&a, rho, 1.0).unwrap() {
                for b in &r.boxes {
                    total += mvn_cdf(b, &mu, &sigma, &opts).unwrap().probability;
                }
            }
        }
        assert!((total - 1.0).abs() < 2.0 * 4.0 * 1e-6, "{total}");
    }

    #[test]
    fn white_bound_at_three_samples_is_closed_form() {
        // M_Rx = 3 white: every symbol is correct iff all three tail samples
        // keep their sign and the prefix is right.
        let a = ZxAlphabet::single(3).unwrap();
        let model = SerBoundModel::new(a.clone(), bound_covariance(&a, 1.0, SigmaMode::White).unwrap()).unwrap();
        let g = 2.0;
        let rep = model.evaluate(g).unwrap();
        let phi = |x: f64| 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        // b_1 also accepts [1,1,-1,1] and [1,-1,1,1]; b_2 / b_4 accept [1,1,1,-1]-type neighbours.
        assert!(rep.ser_ub > 0.0 && rep.ser_ub < 1.0 - phi(g).powi(4) + 1e-6);
        let zero = model.evaluate(0.0).unwrap();
        assert!(zero.ser_ub > 0.5);
    }

    #[test]
    fn bound_decreases_and_reports_consistently() {
        let a = ZxAlphabet::single(3).unwrap();
        let model = SerBoundModel::new(a.clone(), bound_covariance(&a, 1.0, SigmaMode::Correlated).unwrap()).unwrap();
        let r1 = model.evaluate(1.0).unwrap();
        let r2 = model.evaluate(2.0).unwrap();
        assert!(r2.ser_ub < r1.ser_ub);
        assert!((r1.ber_ub - r1.ser_ub / 2.0).abs() < 1e-15);
        let mean_correct = r1.p_correct.iter().sum::<f64>() / 4.0;
        assert!((r1.ser_ub - (1.0 - mean_correct)).abs() < 1e-12);
        assert!(model.evaluate(12.0).unwrap().ser_ub < 1e-20);
    }

    #[test]
    fn target_outside_range_is_rejected() {
        let a = ZxAlphabet::single(3).unwrap();
        let s = bound_covariance(&a, 1.0, SigmaMode::White).unwrap();
        assert!(matches!(
            gamma_for_ser(0.99, &s, &a),
            Err(Error::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            gamma_for_ser(0.0, &s, &a),
            Err(Error::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn covariance_shape_is_checked() {
        let a = ZxAlphabet::paired(2).unwrap();
        assert!(SerBoundModel::new(a, DMatrix::identity(4, 4)).is_err());
    }
}
