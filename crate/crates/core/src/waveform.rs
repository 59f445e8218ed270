//! Pulse shapes, their banded Toeplitz filter matrices and the derived
//! system matrices (combined waveform `V`, upsampling selector `U`, filtered
//! noise covariance).
//!
//! Time is normalized to the symbol period, `T = 1`. All matrices use
//! 0-based indices; receive sample `j` sits at `t = j / M_Rx`.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Roll-off used for both filters throughout the experiments.
pub const DEFAULT_ROLLOFF: f64 = 0.22;

/// Distance below which a removable singularity is evaluated by its limit.
const SINGULARITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    RaisedCosine,
    RootRaisedCosine,
}

/// How sampled taps are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Taps rescaled so that `a^2 sum(g^2) = 1` exactly.
    #[default]
    Unit,
    /// Fixed amplitude `a = (T / M_Rx)^{1/2}` on the receive grid; the energy
    /// lost to truncation is not restored.
    Analytic,
}

/// A sampled pulse shape.
///
/// `samples_per_symbol` is the rate the pulse is normalized for
/// (`a = (T / samples_per_symbol)^{1/2}`); `half_span_symbols` is the
/// truncation `N` of the tap window `±T (N + 1/M_Rx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    pub half_span_symbols: usize,
    pub normalization: Normalization,
}

impl PulseShape {
    pub fn raised_cosine(rolloff: f64, samples_per_symbol: usize, half_span_symbols: usize) -> Self {
        Self {
            kind: PulseKind::RaisedCosine,
            rolloff,
            samples_per_symbol,
            half_span_symbols,
            normalization: Normalization::Unit,
        }
    }

    pub fn root_raised_cosine(rolloff: f64, samples_per_symbol: usize, half_span_symbols: usize) -> Self {
        Self {
            kind: PulseKind::RootRaisedCosine,
            rolloff,
            samples_per_symbol,
            half_span_symbols,
            normalization: Normalization::Unit,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    /// Energy normalization constant `(T / samples_per_symbol)^{1/2}`.
    pub fn scale(&self) -> f64 {
        (1.0 / self.samples_per_symbol as f64).sqrt()
    }

    /// Analytic pulse value at `t` (in symbol periods).
    pub fn value(&self, t: f64) -> f64 {
        pulse_value(self, t)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rolloff) || self.rolloff.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "roll-off {} outside [0, 1]",
                self.rolloff
            )));
        }
        if self.samples_per_symbol == 0 {
            return Err(Error::InvalidParameter("samples_per_symbol must be positive".into()));
        }
        Ok(())
    }
}

/// `sin(pi x) / (pi x)`, exactly zero at nonzero integers.
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.fract() == 0.0 {
        0.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn raised_cosine(eps: f64, t: f64) -> f64 {
    if eps > 0.0 && ((2.0 * eps * t).abs() - 1.0).abs() < SINGULARITY_EPS {
        return PI / 4.0 * sinc(1.0 / (2.0 * eps));
    }
    let s = sinc(t);
    if s == 0.0 {
        return 0.0;
    }
    s * (PI * eps * t).cos() / (1.0 - (2.0 * eps * t).powi(2))
}

fn root_raised_cosine(eps: f64, t: f64) -> f64 {
    if t.abs() < SINGULARITY_EPS {
        return 1.0 - eps + 4.0 * eps / PI;
    }
    if eps > 0.0 && ((4.0 * eps * t).abs() - 1.0).abs() < SINGULARITY_EPS {
        let arg = PI / (4.0 * eps);
        return eps / 2f64.sqrt() * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - eps)).sin() + 4.0 * eps * t * (PI * t * (1.0 + eps)).cos();
    let den = PI * t * (1.0 - (4.0 * eps * t).powi(2));
    num / den
}

/// Analytic RC (unit peak) or RRC (unit energy) pulse at `t` symbol periods.
pub fn pulse_value(shape: &PulseShape, t: f64) -> f64 {
    match shape.kind {
        PulseKind::RaisedCosine => raised_cosine(shape.rolloff, t),
        PulseKind::RootRaisedCosine => root_raised_cosine(shape.rolloff, t),
    }
}

/// Frame dimensions of the oversampled downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    /// Symbols per frame `N`.
    pub n_symbols: usize,
    /// Receive oversampling factor `M_Rx`.
    pub m_rx: usize,
    /// Signaling-rate factor `M_Tx`.
    pub m_tx: usize,
    /// Transmit antennas `N_t`.
    pub n_tx: usize,
    /// Single-antenna users `N_u`.
    pub n_users: usize,
}

impl SystemDims {
    pub fn new(n_symbols: usize, m_rx: usize, m_tx: usize, n_tx: usize, n_users: usize) -> Result<Self> {
        let dims = Self {
            n_symbols,
            m_rx,
            m_tx,
            n_tx,
            n_users,
        };
        dims.validate()?;
        Ok(dims)
    }

    /// Single-antenna, single-user link without faster-than-Nyquist signaling.
    pub fn siso(n_symbols: usize, m_rx: usize) -> Result<Self> {
        Self::new(n_symbols, m_rx, m_rx, 1, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_symbols == 0 || self.m_rx == 0 || self.m_tx == 0 {
            return Err(Error::InvalidParameter("N, M_Rx and M_Tx must all be positive".into()));
        }
        if self.m_rx % self.m_tx != 0 {
            return Err(Error::InvalidParameter(format!(
                "M_Rx = {} is not an integer multiple of M_Tx = {}",
                self.m_rx, self.m_tx
            )));
        }
        if self.n_users == 0 || self.n_tx < self.n_users {
            return Err(Error::InvalidParameter(format!(
                "need N_t >= N_u >= 1, got N_t = {}, N_u = {}",
                self.n_tx, self.n_users
            )));
        }
        Ok(())
    }

    /// Upsampling ratio `M = M_Rx / M_Tx`.
    pub fn upsampling(&self) -> usize {
        self.m_rx / self.m_tx
    }

    /// Receive samples per frame, `N M_Rx + 1`.
    pub fn n_tot(&self) -> usize {
        self.n_symbols * self.m_rx + 1
    }

    /// Transmit samples per frame, `N M_Tx + 1`.
    pub fn n_q(&self) -> usize {
        self.n_symbols * self.m_tx + 1
    }
}

/// Matrix whose `r`-th row is `scale * taps` shifted right by `r * row_shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedToeplitz {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub taps: Vec<f64>,
    pub row_shift: usize,
}

impl BandedToeplitz {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of bounds");
        let start = row * self.row_shift;
        match col.checked_sub(start) {
            Some(k) if k < self.taps.len() => self.scale * self.taps[k],
            _ => 0.0,
        }
    }

    /// Discrete energy `scale^2 * sum(taps^2)` of one row.
    pub fn energy(&self) -> f64 {
        self.scale * self.scale * self.taps.iter().map(|g| g * g).sum::<f64>()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let start = r * self.row_shift;
            for (k, g) in self.taps.iter().enumerate() {
                if start + k < self.cols {
                    m[(r, start + k)] = self.scale * g;
                }
            }
        }
        m
    }

    /// Matrix-vector product without densifying.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length must equal column count");
        (0..self.rows)
            .map(|r| {
                let start = r * self.row_shift;
                let acc: f64 = self.taps.iter().zip(x.iter().skip(start)).map(|(g, v)| g * v).sum();
                self.scale * acc
            })
            .collect()
    }

    /// Scaled tap autocorrelation `sum_k h[k] h[k + lag]`, which is the
    /// `(i, i + lag)` entry of `G G^T` for a unit row shift.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        self.cross_correlation(self, lag)
    }

    /// `sum_k self[k] other[k + lag]` with both scales applied.
    pub fn cross_correlation(&self, other: &BandedToeplitz, lag: usize) -> f64 {
        let acc: f64 = self
            .taps
            .iter()
            .zip(other.taps.iter().skip(lag))
            .map(|(a, b)| a * b)
            .sum();
        self.scale * other.scale * acc
    }
}

/// Samples the pulse on the receive grid `t = k / M_Rx`, `|k| <= N_tot`.
fn normalized_taps(dims: &SystemDims, shape: &PulseShape) -> (f64, Vec<f64>) {
    let half = dims.n_tot() as i64;
    let step = 1.0 / dims.m_rx as f64;
    let raw: Vec<f64> = (-half..=half).map(|k| pulse_value(shape, k as f64 * step)).collect();
    match shape.normalization {
        Normalization::Unit => {
            let scale = shape.scale();
            let norm = raw.iter().map(|g| g * g).sum::<f64>().sqrt() * scale;
            (scale, raw.into_iter().map(|g| g / norm).collect())
        }
        Normalization::Analytic => (step.sqrt(), raw),
    }
}

fn build_filter(dims: &SystemDims, shape: &PulseShape, kind: PulseKind, rate: usize) -> Result<BandedToeplitz> {
    dims.validate()?;
    shape.validate()?;
    if shape.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "expected a {kind:?} pulse, got {:?}",
            shape.kind
        )));
    }
    if shape.samples_per_symbol != rate {
        return Err(Error::Dimension(format!(
            "pulse normalized for {} samples per symbol, system expects {rate}",
            shape.samples_per_symbol
        )));
    }
    if shape.half_span_symbols != dims.n_symbols {
        return Err(Error::Dimension(format!(
            "pulse half span {} symbols does not match N = {}",
            shape.half_span_symbols, dims.n_symbols
        )));
    }
    let (scale, taps) = normalized_taps(dims, shape);
    let n_tot = dims.n_tot();
    Ok(BandedToeplitz {
        rows: n_tot,
        cols: 3 * n_tot,
        scale,
        taps,
        row_shift: 1,
    })
}

/// Transmit filter matrix `G_Tx` (`N_tot x 3 N_tot`) for an RC pulse.
///
/// The taps live on the receive grid so that `G_Tx^T U p` is the transmit
/// waveform of the upsampled precoding vector.
pub fn build_gtx(dims: &SystemDims, shape: &PulseShape) -> Result<BandedToeplitz> {
    build_filter(dims, shape, PulseKind::RaisedCosine, dims.m_tx)
}

/// Receive filter matrix `G_Rx` (`N_tot x 3 N_tot`) for an RRC pulse.
pub fn build_grx(dims: &SystemDims, shape: &PulseShape) -> Result<BandedToeplitz> {
    build_filter(dims, shape, PulseKind::RootRaisedCosine, dims.m_rx)
}

/// Combined waveform matrix `V[i][j] = v((j - i) T / M_Rx)` with
/// `v = g_Tx * g_Rx` evaluated by discrete convolution, i.e. `V = G_Rx G_Tx^T`.
pub fn build_v(dims: &SystemDims, tx: &PulseShape, rx: &PulseShape) -> Result<DMatrix<f64>> {
    let gtx = build_gtx(dims, tx)?;
    let grx = build_grx(dims, rx)?;
    Ok(combined_waveform(&gtx, &grx))
}

/// `G_Rx G_Tx^T` from two filters already built for the same dims.
pub fn combined_waveform(gtx: &BandedToeplitz, grx: &BandedToeplitz) -> DMatrix<f64> {
    let n = grx.rows;
    // Even pulses: v(-lag) = v(lag).
    let lags: Vec<f64> = (0..n).map(|lag| grx.cross_correlation(gtx, lag)).collect();
    DMatrix::from_fn(n, n, |i, j| lags[i.abs_diff(j)])
}

/// `M`-fold upsampling selector: `U[m][n] = 1` iff `m = M n` (0-based).
pub fn build_u(dims: &SystemDims) -> DMatrix<f64> {
    let m = dims.upsampling();
    DMatrix::from_fn(dims.n_tot(), dims.n_q(), |r, c| if r == m * c { 1.0 } else { 0.0 })
}

/// Covariance of `G_Rx n` restricted to the window rows, for white `n` of
/// variance `sigma2_dim` per real dimension.
pub fn noise_covariance(grx: &BandedToeplitz, window: Range<usize>, sigma2_dim: f64) -> Result<DMatrix<f64>> {
    if window.is_empty() || window.end > grx.rows {
        return Err(Error::Dimension(format!("window {window:?} outside 0..{}", grx.rows)));
    }
    if !(sigma2_dim > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance {sigma2_dim} must be positive"
        )));
    }
    let m = window.len();
    // Rows of a unit-shift Toeplitz always hold the full tap vector, so the
    // Gram matrix only depends on the lag.
    let lags: Vec<f64> = (0..m).map(|lag| sigma2_dim * grx.autocorrelation(lag)).collect();
    let sigma = DMatrix::from_fn(m, m, |i, j| lags[i.abs_diff(j)]);
    if sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(
            "filtered noise covariance; receive filter over-truncated".into(),
        ));
    }
    Ok(sigma)
}

/// `W = G_Tx^T U`, the map from precoding vector to transmit waveform.
pub fn transmit_map(gtx: &BandedToeplitz, u: &DMatrix<f64>) -> DMatrix<f64> {
    gtx.to_dense().transpose() * u
}

/// All matrices of one link configuration.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub dims: SystemDims,
    pub rolloff_tx: f64,
    pub rolloff_rx: f64,
    pub rx_normalization: Normalization,
    pub gtx: BandedToeplitz,
    pub grx: BandedToeplitz,
    pub v: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// `V U`
    pub vu: DMatrix<f64>,
    /// `W = G_Tx^T U`
    pub w: DMatrix<f64>,
}

impl SystemMatrices {
    /// Transmit taps are unit-energy; receive taps use [`Normalization::Analytic`].
    pub fn new(dims: SystemDims, rolloff_tx: f64, rolloff_rx: f64) -> Result<Self> {
        Self::with_normalization(dims, rolloff_tx, rolloff_rx, Normalization::Analytic)
    }

    pub fn with_normalization(
        dims: SystemDims,
        rolloff_tx: f64,
        rolloff_rx: f64,
        rx_normalization: Normalization,
    ) -> Result<Self> {
        dims.validate()?;
        let tx = PulseShape::raised_cosine(rolloff_tx, dims.m_tx, dims.n_symbols);
        let rx =
            PulseShape::root_raised_cosine(rolloff_rx, dims.m_rx, dims.n_symbols).with_normalization(rx_normalization);
        let gtx = build_gtx(&dims, &tx)?;
        let grx = build_grx(&dims, &rx)?;
        let v = combined_waveform(&gtx, &grx);
        let u = build_u(&dims);
        let vu = &v * &u;
        let w = transmit_map(&gtx, &u);
        Ok(Self {
            dims,
            rolloff_tx,
            rolloff_rx,
            rx_normalization,
            gtx,
            grx,
            v,
            u,
            vu,
            w,
        })
    }

    /// Noiseless receive samples `V U p` of one quadrature.
    pub fn receive(&self, p: &[f64]) -> Vec<f64> {
        (&self.vu * DVector::from_column_slice(p)).as_slice().to_vec()
    }
}
