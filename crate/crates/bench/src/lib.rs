//! Deterministic inputs for the criterion benchmarks.

use nalgebra::DMatrix;
use zxqos_core::zx::encode;
use zxqos_core::{build_qos_problem, PrecodeProblem, SystemDims, SystemMatrices, ZxAlphabet};

/// QoS problem of a SISO frame whose symbols cycle through the alphabet.
pub fn qos_problem(n_symbols: usize, m_rx: usize, gamma: f64) -> PrecodeProblem {
    let sys = SystemMatrices::new(SystemDims::siso(n_symbols, m_rx).unwrap(), 0.22, 0.22).unwrap();
    let alphabet = ZxAlphabet::for_oversampling(m_rx).unwrap();
    let blocks = n_symbols / alphabet.block_symbols();
    let symbols: Vec<usize> = (0..blocks).map(|i| (3 * i + 1) % alphabet.len()).collect();
    let frame = encode(&symbols, 1, &alphabet).unwrap();
    build_qos_problem(&frame.c_out, &sys, 1.0, gamma).unwrap()
}

/// Equicorrelated covariance with correlation `rho`.
pub fn equicorrelated(m: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { rho })
}
