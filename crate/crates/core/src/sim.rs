//! Monte Carlo link simulation: channel draws, QoS precoding, receive
//! filtering of white noise, sign quantization and block detection.
//!
//! Randomness is drawn from ChaCha8 streams addressed by
//! `(realization, trial, user, role)`, so every statistic is a pure function
//! of the configuration and seed, independent of thread count.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precoding::{snr_required, total_transmit_energy, zf_precoder, QosDesigner, UserFrames};
use crate::qp::SolveOptions;
use crate::ser_bound::{bound_covariance, SerBoundModel, SigmaMode};
use crate::waveform::{Normalization, SystemDims, SystemMatrices, DEFAULT_ROLLOFF};
use crate::zx::{detect, encode, encode_bits, gray_decode, Sign, ZxAlphabet, ZxFrame};

/// Two-sided 95 % standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Trials evaluated between checks of the stopping rule.
const CHUNK: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One channel realization for the whole run.
    #[default]
    Fixed,
    /// A new realization for every trial.
    Redraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    TargetSer,
    NSymbols,
    NTx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

fn default_rolloff() -> f64 {
    DEFAULT_ROLLOFF
}

fn default_sigma2() -> f64 {
    1.0
}

fn default_rx_normalization() -> Normalization {
    Normalization::Analytic
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dims: SystemDims,
    #[serde(default = "default_rolloff")]
    pub rolloff_tx: f64,
    #[serde(default = "default_rolloff")]
    pub rolloff_rx: f64,
    #[serde(default = "default_rx_normalization")]
    pub rx_normalization: Normalization,
    /// Noise variance per real dimension, also used as `N_0`.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub target_ser: Option<f64>,
    /// Covariance model for the bound and for `target_ser`.
    #[serde(default)]
    pub sigma_mode: SigmaMode,
    /// Frames per run (per channel realization for [`ser_cdf`]).
    pub trials: u64,
    /// Stop early once this many symbol errors are counted.
    #[serde(default)]
    pub target_errors: Option<u64>,
    pub seed: u64,
    #[serde(default)]
    pub channel_mode: ChannelMode,
    /// Report the semi-analytical bound next to the measurement.
    #[serde(default = "default_true")]
    pub bound: bool,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
}

impl SimConfig {
    /// Fixed-`gamma` configuration with default roll-offs and `sigma2 = 1`.
    pub fn new(dims: SystemDims, gamma: f64, trials: u64, seed: u64) -> Self {
        Self {
            dims,
            rolloff_tx: DEFAULT_ROLLOFF,
            rolloff_rx: DEFAULT_ROLLOFF,
            rx_normalization: Normalization::Analytic,
            sigma2: 1.0,
            gamma: Some(gamma),
            target_ser: None,
            sigma_mode: SigmaMode::Correlated,
            trials,
            target_errors: None,
            seed,
            channel_mode: ChannelMode::Fixed,
            bound: true,
            sweep: None,
        }
    }

    pub fn with_target_ser(mut self, target: f64) -> Self {
        self.gamma = None;
        self.target_ser = Some(target);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma2 = {} must be nonnegative",
                self.sigma2
            )));
        }
        match (self.gamma, self.target_ser) {
            (Some(g), None) => {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma = {g} must be positive; a zero margin gives no QoS design"
                    )));
                }
            }
            (None, Some(t)) => {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::InvalidParameter(format!("target_ser = {t} outside (0, 1)")));
                }
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "exactly one of gamma and target_ser must be set".into(),
                ))
            }
        }
        let alphabet = ZxAlphabet::for_oversampling(self.dims.m_rx)?;
        if self.dims.n_symbols % alphabet.block_symbols() != 0 {
            return Err(Error::InvalidParameter(format!(
                "N = {} is not a multiple of the {} symbols per alphabet entry",
                self.dims.n_symbols,
                alphabet.block_symbols()
            )));
        }
        if self.dims.n_users > 64 {
            return Err(Error::InvalidParameter("at most 64 users are supported".into()));
        }
        Ok(())
    }
}

/// Counts of one simulated frame across all users and quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialOutcome {
    /// Wrong alphabet entries (symbol pairs for `M_Rx = 2`).
    pub symbol_errors: u64,
    pub bit_errors: u64,
    pub symbols: u64,
    pub bits: u64,
    pub e_tx: f64,
    /// Linear `E_Tx / (N_q N_0 (1 + eps_Tx))`.
    pub snr_req: f64,
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Channel = 0,
    Payload = 1,
    Noise = 2,
}

fn stream_rng(seed: u64, realization: u64, trial: u64, user: usize, role: Role) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&realization.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial << 8 | (user as u64) << 2 | role as u64);
    rng
}

/// `n_u x n_t` matrix of i.i.d. `CN(0, 1)` entries, drawn row by row.
pub fn draw_channel<R: Rng + ?Sized>(n_u: usize, n_t: usize, rng: &mut R) -> Result<DMatrix<Complex64>> {
    if n_u == 0 || n_t < n_u {
        return Err(Error::Dimension(format!("need N_t >= N_u >= 1, got {n_u}x{n_t}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = DMatrix::zeros(n_u, n_t);
    for r in 0..n_u {
        for c in 0..n_t {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            h[(r, c)] = Complex64::new(re * s, im * s);
        }
    }
    Ok(h)
}

/// A channel with its zero-forcing precoder.
#[derive(Debug, Clone)]
pub struct LinkChannel {
    pub h: DMatrix<Complex64>,
    pub p_sp: DMatrix<Complex64>,
    pub beta: f64,
    /// `H P_sp`
    pub effective: DMatrix<Complex64>,
}

impl LinkChannel {
    pub fn new(h: DMatrix<Complex64>) -> Result<Self> {
        let zf = zf_precoder(&h)?;
        let p_sp = zf.p_sp();
        let effective = &h * &p_sp;
        Ok(Self {
            h,
            p_sp,
            beta: zf.beta(),
            effective,
        })
    }
}

/// Precomputed state for repeated trials of one configuration.
#[derive(Debug)]
pub struct Simulator {
    config: SimConfig,
    sys: Arc<SystemMatrices>,
    designer: QosDesigner,
    alphabet: ZxAlphabet,
    bound: Option<SerBoundModel>,
    gamma: f64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let dims = config.dims;
        let sys = Arc::new(SystemMatrices::with_normalization(
            dims,
            config.rolloff_tx,
            config.rolloff_rx,
            config.rx_normalization,
        )?);
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let alphabet = ZxAlphabet::for_oversampling(dims.m_rx)?;
        let needs_model = config.target_ser.is_some() || (config.bound && alphabet.bits_per_block().is_some());
        let bound = if needs_model && config.sigma2 > 0.0 {
            let sigma = bound_covariance(&alphabet, config.sigma2, config.sigma_mode)?;
            Some(SerBoundModel::new(alphabet.clone(), sigma)?)
        } else {
            None
        };
        let gamma = match (config.gamma, config.target_ser) {
            (Some(g), _) => g,
            (None, Some(t)) => bound
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("target_ser needs sigma2 > 0".into()))?
                .gamma_for_ser(t)?,
            (None, None) => unreachable!("validated"),
        };
        Ok(Self {
            config,
            sys,
            designer,
            alphabet,
            bound,
            gamma,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.sys
    }

    pub fn alphabet(&self) -> &ZxAlphabet {
        &self.alphabet
    }

    /// Design threshold, resolved from `target_ser` when needed.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The bound model, present when the configuration asks for it.
    pub fn bound_model(&self) -> Option<&SerBoundModel> {
        self.bound.as_ref()
    }

    /// Same system at another threshold; the precoder cache is kept.
    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
        }
        self.gamma = gamma;
        self.config.gamma = Some(gamma);
        self.config.target_ser = None;
        Ok(())
    }

    /// Channel of `(realization, trial)`. Row `k` comes from a stream of
    /// its own, so adding antennas extends rows instead of redrawing them.
    pub fn channel(&self, realization: u64, trial: u64) -> Result<LinkChannel> {
        let d = self.config.dims;
        let mut h = DMatrix::zeros(d.n_users, d.n_tx);
        for k in 0..d.n_users {
            let mut rng = stream_rng(self.config.seed, realization, trial, k, Role::Channel);
            let row = draw_channel(1, d.n_tx, &mut rng)?;
            h.row_mut(k).copy_from(&row);
        }
        LinkChannel::new(h)
    }

    fn payload(&self, rng: &mut ChaCha8Rng) -> Result<ZxFrame> {
        let blocks = self.config.dims.n_symbols / self.alphabet.block_symbols();
        match self.alphabet.bits_per_block() {
            Some(width) => {
                let bits: Vec<u8> = (0..blocks * width).map(|_| rng.random_range(0..2u8)).collect();
                encode_bits(&bits, 1, &self.alphabet)
            }
            None => {
                let symbols: Vec<usize> = (0..blocks).map(|_| rng.random_range(0..self.alphabet.len())).collect();
                encode(&symbols, 1, &self.alphabet)
            }
        }
    }

    /// White and receive-filtered noise of one user in one trial, real
    /// part first.
    pub fn noise(&self, realization: u64, trial: u64, user: usize) -> NoiseDraw {
        let grx = &self.sys.grx;
        let sd = self.config.sigma2.sqrt();
        let mut rng = stream_rng(self.config.seed, realization, trial, user, Role::Noise);
        let mut white = || -> Vec<f64> {
            (0..grx.cols)
                .map(|_| sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        let white = [white(), white()];
        let filtered = [grx.mul_vec(&white[0]), grx.mul_vec(&white[1])];
        NoiseDraw { white, filtered }
    }

    fn count(&self, sent: &ZxFrame, z: &[Sign], out: &mut TrialOutcome) -> Result<()> {
        let detected = detect(z, &self.alphabet)?;
        out.symbols += sent.symbols.len() as u64;
        out.symbol_errors += detected.iter().zip(&sent.symbols).filter(|(a, b)| a != b).count() as u64;
        if !sent.bits.is_empty() {
            let bits = gray_decode(&detected, &self.alphabet)?;
            out.bits += sent.bits.len() as u64;
            out.bit_errors += bits.iter().zip(&sent.bits).filter(|(a, b)| a != b).count() as u64;
        }
        Ok(())
    }

    /// One frame for every user over `link`. With `sigma2 = 0` no noise is
    /// drawn.
    pub fn run_trial(&self, link: &LinkChannel, realization: u64, trial: u64) -> Result<TrialOutcome> {
        let d = self.config.dims;
        let seed = self.config.seed;
        let frames = (0..d.n_users)
            .map(|k| {
                let mut rng = stream_rng(seed, realization, trial, k, Role::Payload);
                Ok(UserFrames {
                    in_phase: self.payload(&mut rng)?,
                    quadrature: self.payload(&mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let precoder = self.designer.precode(&frames, link.beta, self.gamma)?;

        // Noiseless per-user waveforms V U p_k, real and imaginary parts.
        let s: Vec<(Vec<f64>, Vec<f64>)> = precoder
            .users
            .iter()
            .map(|u| (self.sys.receive(&u.in_phase.p), self.sys.receive(&u.quadrature.p)))
            .collect();
        let n = self.sys.dims.n_tot();
        let mut out = TrialOutcome::default();
        for k in 0..d.n_users {
            let mut y_re = vec![0.0; n];
            let mut y_im = vec![0.0; n];
            for (j, (sr, si)) in s.iter().enumerate() {
                let a = link.effective[(k, j)];
                for t in 0..n {
                    y_re[t] += a.re * sr[t] - a.im * si[t];
                    y_im[t] += a.re * si[t] + a.im * sr[t];
                }
            }
            if self.config.sigma2 > 0.0 {
                let noise = self.noise(realization, trial, k);
                y_re.iter_mut().zip(&noise.filtered[0]).for_each(|(y, v)| *y += v);
                y_im.iter_mut().zip(&noise.filtered[1]).for_each(|(y, v)| *y += v);
            }
            self.count(&frames[k].in_phase, &quantize(&y_re), &mut out)?;
            self.count(&frames[k].quadrature, &quantize(&y_im), &mut out)?;
        }
        out.e_tx = total_transmit_energy(&link.p_sp, &precoder.complex_vectors(), &self.sys.w)?;
        out.snr_req = snr_required(out.e_tx, d.n_q(), self.config.sigma2, self.config.rolloff_tx).linear;
        Ok(out)
    }

    /// Runs the configured number of trials for one channel realization
    /// (or per-trial channels in redraw mode), honoring the stopping rule.
    fn run_realization(&self, realization: u64, fixed: Option<&LinkChannel>, early_stop: bool) -> Result<Accumulator> {
        let mut acc = Accumulator::default();
        let mut start = 0;
        while start < self.config.trials {
            let end = (start + CHUNK).min(self.config.trials);
            let chunk = (start..end)
                .into_par_iter()
                .map(|t| match fixed {
                    Some(link) => self.run_trial(link, realization, t),
                    None => self.run_trial(&self.channel(realization, t)?, realization, t),
                })
                .collect::<Result<Vec<_>>>()?;
            for o in chunk {
                acc.push(&o);
            }
            start = end;
            if early_stop {
                if let Some(target) = self.config.target_errors {
                    if acc.symbol_errors >= target {
                        break;
                    }
                }
            }
        }
        Ok(acc)
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloResult> {
        let fixed = match self.config.channel_mode {
            ChannelMode::Fixed => Some(self.channel(0, 0)?),
            ChannelMode::Redraw => None,
        };
        let acc = self.run_realization(0, fixed.as_ref(), true)?;
        let (ser_ub, ber_ub) = match (&self.bound, self.config.bound) {
            (Some(model), true) => {
                let r = model.evaluate(self.gamma)?;
                (Some(r.ser_ub), Some(r.ber_ub))
            }
            _ => (None, None),
        };
        Ok(acc.finish(self, ser_ub, ber_ub))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    /// `n`, per real dimension variance `sigma2`.
    pub white: [Vec<f64>; 2],
    /// `G_Rx n`
    pub filtered: [Vec<f64>; 2],
}

/// `Q_1`: sign with `0 -> +1`.
pub fn quantize(y: &[f64]) -> Vec<Sign> {
    y.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect()
}

#[derive(Debug, Default)]
struct Accumulator {
    trials: u64,
    symbols: u64,
    symbol_errors: u64,
    bits: u64,
    bit_errors: u64,
    e_tx: Vec<f64>,
}

impl Accumulator {
    fn push(&mut self, o: &TrialOutcome) {
        self.trials += 1;
        self.symbols += o.symbols;
        self.symbol_errors += o.symbol_errors;
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.e_tx.push(o.e_tx);
    }

    fn ser(&self) -> f64 {
        self.symbol_errors as f64 / self.symbols as f64
    }

    fn finish(mut self, sim: &Simulator, ser_ub: Option<f64>, ber_ub: Option<f64>) -> MonteCarloResult {
        let ser = self.ser();
        let (ser_ci_lo, ser_ci_hi) = wilson_interval(self.symbol_errors, self.symbols);
        let (ber, ber_ci_lo, ber_ci_hi) = if self.bits > 0 {
            let (lo, hi) = wilson_interval(self.bit_errors, self.bits);
            (Some(self.bit_errors as f64 / self.bits as f64), Some(lo), Some(hi))
        } else {
            (None, None, None)
        };
        let etx_mean = self.e_tx.iter().sum::<f64>() / self.e_tx.len() as f64;
        let etx_median = median(&mut self.e_tx);
        let cfg = &sim.config;
        let snr = |e| snr_required(e, cfg.dims.n_q(), cfg.sigma2, cfg.rolloff_tx).db;
        MonteCarloResult {
            gamma: sim.gamma,
            sigma2: cfg.sigma2,
            trials: self.trials,
            symbols: self.symbols,
            symbol_errors: self.symbol_errors,
            bits: self.bits,
            bit_errors: self.bit_errors,
            ser,
            ser_se: (ser * (1.0 - ser) / self.symbols as f64).sqrt(),
            ser_ci_lo,
            ser_ci_hi,
            ber,
            ber_ci_lo,
            ber_ci_hi,
            ser_ub,
            ber_ub,
            etx_mean,
            etx_median,
            snr_req_db: snr(etx_mean),
            snr_req_median_db: snr(etx_median),
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Wilson score interval at 95 % confidence.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub gamma: f64,
    pub sigma2: f64,
    pub trials: u64,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ser: f64,
    /// Binomial standard error of `ser`.
    pub ser_se: f64,
    pub ser_ci_lo: f64,
    pub ser_ci_hi: f64,
    pub ber: Option<f64>,
    pub ber_ci_lo: Option<f64>,
    pub ber_ci_hi: Option<f64>,
    pub ser_ub: Option<f64>,
    pub ber_ub: Option<f64>,
    pub etx_mean: f64,
    pub etx_median: f64,
    /// SNR_Req of the mean transmit energy, in dB.
    pub snr_req_db: f64,
    pub snr_req_median_db: f64,
}

pub fn monte_carlo(config: &SimConfig) -> Result<MonteCarloResult> {
    Simulator::new(config.clone())?.monte_carlo()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub result: Option<MonteCarloResult>,
    pub error: Option<String>,
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value < 1e9 {
        Ok(value as usize)
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} = {value} is not a positive integer"
        )))
    }
}

/// One aggregated row per grid value. A failing point is recorded and the
/// sweep continues.
pub fn sweep(config: &SimConfig) -> Result<Vec<SweepRow>> {
    let grid = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("configuration has no sweep grid".into()))?;
    if grid.values.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    let mut base = config.clone();
    base.sweep = None;
    // Threshold sweeps share one simulator, and with it the precoder cache.
    let mut shared = match grid.param {
        SweepParam::Gamma | SweepParam::TargetSer => {
            let mut c = base.clone();
            c.gamma = Some(1.0);
            c.target_ser = None;
            if grid.param == SweepParam::TargetSer {
                c.bound = true;
            }
            Some(Simulator::new(c)?)
        }
        _ => None,
    };
    let rows = grid
        .values
        .iter()
        .map(|&value| {
            let outcome = (|| -> Result<MonteCarloResult> {
                match grid.param {
                    SweepParam::Gamma => {
                        let sim = shared.as_mut().expect("shared simulator");
                        sim.set_gamma(value)?;
                        sim.monte_carlo()
                    }
                    SweepParam::TargetSer => {
                        let sim = shared.as_mut().expect("shared simulator");
                        let model = sim.bound.as_ref().ok_or_else(|| {
                            Error::InvalidParameter("target sweep needs sigma2 > 0 and a Gray-labelled alphabet".into())
                        })?;
                        let g = model.gamma_for_ser(value)?;
                        sim.set_gamma(g)?;
                        sim.monte_carlo()
                    }
                    SweepParam::NSymbols => {
                        let mut c = base.clone();
                        c.dims.n_symbols = as_count(value, "N")?;
                        monte_carlo(&c)
                    }
                    SweepParam::NTx => {
                        let mut c = base.clone();
                        c.dims.n_tx = as_count(value, "N_t")?;
                        monte_carlo(&c)
                    }
                }
            })();
            match outcome {
                Ok(r) => SweepRow {
                    param: grid.param,
                    value,
                    result: Some(r),
                    error: None,
                },
                Err(e) => SweepRow {
                    param: grid.param,
                    value,
                    result: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Per-realization SER and its empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerCdfResult {
    pub gamma: f64,
    pub target_ser: Option<f64>,
    /// SER of each channel realization, in draw order.
    pub ser: Vec<f64>,
    /// Distinct SER values, ascending.
    pub grid: Vec<f64>,
    /// Fraction of realizations with SER at most `grid[i]`.
    pub cdf: Vec<f64>,
}

impl SerCdfResult {
    fn from_samples(gamma: f64, target_ser: Option<f64>, ser: Vec<f64>) -> Self {
        let mut sorted = ser.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut grid = Vec::new();
        let mut cdf = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if i + 1 < sorted.len() && sorted[i + 1] == v {
                continue;
            }
            grid.push(v);
            cdf.push((i + 1) as f64 / n);
        }
        Self {
            gamma,
            target_ser,
            ser,
            grid,
            cdf,
        }
    }

    /// Right-continuous empirical CDF at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        match self.grid.partition_point(|&g| g <= x) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }
}

/// Designs with the configured threshold on `n_channels` independent
/// channels and measures the SER of each over `config.trials` frames.
pub fn ser_cdf(config: &SimConfig, n_channels: usize) -> Result<SerCdfResult> {
    if n_channels < 50 {
        return Err(Error::InvalidParameter(format!(
            "need at least 50 channel realizations, got {n_channels}"
        )));
    }
    let sim = Simulator::new(config.clone())?;
    let ser = (0..n_channels as u64)
        .map(|r| {
            let link = sim.channel(r, 0)?;
            Ok(sim.run_realization(r, Some(&link), false)?.ser())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SerCdfResult::from_samples(sim.gamma, config.target_ser, ser))
}
