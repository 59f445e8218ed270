//! Time-instance zero-crossing (TI ZX) modulation.
//!
//! A symbol occupies `M_Rx` one-bit samples. Symbol `b_1` (index 0) keeps the
//! sign of the previous sample for the whole interval; symbol `b_j` (index
//! `j - 1`) flips the sign once, in sub-interval `M_Rx - j + 2`. Sub-interval
//! `i` lies between sample `i - 1` and sample `i` of the block, sample 0 being
//! the last sample of the previous block (or the pilot).
//!
//! For `M_Rx = 2` the Gray labelling works on pairs of symbols: eight of the
//! nine pairs are used, the pair "crossing in the last sub-interval followed
//! by a crossing in the first sub-interval" (a one-sample run) is dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-bit sample value, `+1` or `-1`.
pub type Sign = i8;

/// Base symbol pairs of the paired `M_Rx = 2` alphabet, in label order.
///
/// Base index 0 = no crossing, 1 = crossing in sub-interval 2, 2 = crossing
/// in sub-interval 1.
const PAIRED_MRX2: [[usize; 2]; 8] = [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 1], [2, 0], [2, 2]];

/// Largest block for which the full detection lookup table is built.
const MAX_LUT_BITS: usize = 16;

/// Codewords of single symbols or of fixed groups of symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZxAlphabet {
    m_rx: usize,
    block_symbols: usize,
    /// Base symbols making up each alphabet entry.
    components: Vec<Vec<usize>>,
    /// Codeword tails (without prefix) for a positive previous sample.
    tails: Vec<Vec<Sign>>,
    /// Detection result per block pattern; bit `k` set means sample `k` is -1.
    lut: Vec<DetectedBlock>,
}

impl ZxAlphabet {
    /// One symbol per block, `R = M_Rx + 1` entries.
    pub fn single(m_rx: usize) -> Result<Self> {
        if m_rx == 0 {
            return Err(Error::InvalidParameter("M_Rx must be positive".into()));
        }
        let components = (0..=m_rx).map(|s| vec![s]).collect();
        Ok(Self::from_components(m_rx, 1, components))
    }

    /// Pairs of symbols for `M_Rx = 2` (eight entries, three bits).
    pub fn paired(m_rx: usize) -> Result<Self> {
        if m_rx != 2 {
            return Err(Error::InvalidParameter(format!(
                "paired alphabet is defined for M_Rx = 2 only, got {m_rx}"
            )));
        }
        let components = PAIRED_MRX2.iter().map(|p| p.to_vec()).collect();
        Ok(Self::from_components(2, 2, components))
    }

    /// The alphabet used for Gray labelling at this oversampling factor:
    /// pairs for `M_Rx = 2`, single symbols otherwise.
    pub fn for_oversampling(m_rx: usize) -> Result<Self> {
        if m_rx == 2 {
            Self::paired(2)
        } else {
            Self::single(m_rx)
        }
    }

    fn from_components(m_rx: usize, block_symbols: usize, components: Vec<Vec<usize>>) -> Self {
        let tails = components
            .iter()
            .map(|parts| {
                let mut out = Vec::with_capacity(m_rx * block_symbols);
                let mut prev = 1;
                for &s in parts {
                    out.extend(base_codeword(m_rx, s, prev));
                    prev = *out.last().expect("m_rx > 0");
                }
                out
            })
            .collect();
        let mut alphabet = Self {
            m_rx,
            block_symbols,
            components,
            tails,
            lut: Vec::new(),
        };
        let m = alphabet.block_len() + 1;
        if m <= MAX_LUT_BITS {
            alphabet.lut = (0..1usize << m)
                .map(|bits| alphabet.search(&pattern_from_index(bits, m)))
                .collect();
        }
        alphabet
    }

    pub fn m_rx(&self) -> usize {
        self.m_rx
    }

    /// Base symbols per alphabet entry.
    pub fn block_symbols(&self) -> usize {
        self.block_symbols
    }

    /// Number of alphabet entries.
    pub fn len(&self) -> usize {
        self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }

    /// Number of distinct base symbols `R = 1 + M_Rx`.
    pub fn base_size(&self) -> usize {
        self.m_rx + 1
    }

    /// Samples per block, excluding the shared previous sample.
    pub fn block_len(&self) -> usize {
        self.m_rx * self.block_symbols
    }

    /// Base symbols of an alphabet entry.
    pub fn components(&self, symbol: usize) -> &[usize] {
        &self.components[symbol]
    }

    /// Payload bits per block, when the alphabet size is a power of two.
    pub fn bits_per_block(&self) -> Option<usize> {
        let n = self.len();
        n.is_power_of_two().then(|| n.trailing_zeros() as usize)
    }

    /// Bits per transmitted base symbol, `n_s`.
    pub fn bits_per_symbol(&self) -> Option<f64> {
        self.bits_per_block().map(|b| b as f64 / self.block_symbols as f64)
    }

    fn check(&self, symbol: usize) -> Result<()> {
        if symbol >= self.len() {
            return Err(Error::InvalidSymbol {
                index: symbol,
                size: self.len(),
            });
        }
        Ok(())
    }

    /// Brute-force Hamming search over both prefix polarities.
    fn search(&self, z_b: &[Sign]) -> DetectedBlock {
        let mut best: Option<(usize, bool, usize)> = None;
        let mut costs = vec![usize::MAX; self.len()];
        for (symbol, tail) in self.tails.iter().enumerate() {
            for prefix in [1 as Sign, -1] {
                let mismatch = prefix != z_b[0];
                let cost =
                    usize::from(mismatch) + tail.iter().zip(&z_b[1..]).filter(|(c, z)| **c * prefix != **z).count();
                costs[symbol] = costs[symbol].min(cost);
                let key = (cost, mismatch, symbol);
                if best.map_or(true, |b| key < b) {
                    best = Some(key);
                }
            }
        }
        let (cost, _, symbol) = best.expect("alphabet is nonempty");
        let tie = costs.iter().filter(|&&c| c == cost).count() > 1;
        DetectedBlock {
            z_block: z_b.to_vec(),
            detected_symbol: symbol,
            hamming_cost: cost,
            tie,
        }
    }
}

fn pattern_from_index(bits: usize, m: usize) -> Vec<Sign> {
    (0..m).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect()
}

fn pattern_index(z: &[Sign]) -> usize {
    z.iter()
        .enumerate()
        .fold(0, |acc, (k, &s)| if s < 0 { acc | 1 << k } else { acc })
}

fn base_codeword(m_rx: usize, symbol: usize, rho_prev: Sign) -> Vec<Sign> {
    if symbol == 0 {
        return vec![rho_prev; m_rx];
    }
    // Crossing in sub-interval m_rx - symbol + 1: samples from that index on
    // carry the opposite sign.
    let flip_at = m_rx - symbol + 1;
    (1..=m_rx)
        .map(|k| if k < flip_at { rho_prev } else { -rho_prev })
        .collect()
}

/// Hamming distance `sum 1/2 |z - c|` between sign vectors.
pub fn hamming(z: &[Sign], c: &[Sign]) -> usize {
    z.iter()
        .zip(c)
        .map(|(a, b)| (i32::from(*a) - i32::from(*b)).unsigned_abs() as usize)
        .sum::<usize>()
        / 2
}

/// Codeword of `symbol` following a sample of sign `rho_prev`.
pub fn codeword(symbol: usize, rho_prev: Sign, alphabet: &ZxAlphabet) -> Result<Vec<Sign>> {
    alphabet.check(symbol)?;
    Ok(alphabet.tails[symbol].iter().map(|c| c * rho_prev).collect())
}

/// A frame of TI ZX blocks and its target one-bit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZxFrame {
    /// Alphabet entries, one per block.
    pub symbols: Vec<usize>,
    pub rho0: Sign,
    /// Target sign pattern of length `N M_Rx + 1`, pilot first.
    pub c_out: Vec<Sign>,
    /// Gray payload, empty when the frame was built from symbols.
    pub bits: Vec<u8>,
}

/// Concatenates the codewords of `symbols` after the pilot `rho0`.
pub fn encode(symbols: &[usize], rho0: Sign, alphabet: &ZxAlphabet) -> Result<ZxFrame> {
    if symbols.is_empty() {
        return Err(Error::InvalidParameter("a frame needs at least one symbol".into()));
    }
    if rho0 != 1 && rho0 != -1 {
        return Err(Error::InvalidParameter(format!("pilot must be +1 or -1, got {rho0}")));
    }
    let mut c_out = Vec::with_capacity(1 + symbols.len() * alphabet.block_len());
    c_out.push(rho0);
    for &s in symbols {
        let prev = *c_out.last().expect("pilot present");
        c_out.extend(codeword(s, prev, alphabet)?);
    }
    Ok(ZxFrame {
        symbols: symbols.to_vec(),
        rho0,
        c_out,
        bits: Vec::new(),
    })
}

/// Gray-maps `bits` to symbols and encodes them.
pub fn encode_bits(bits: &[u8], rho0: Sign, alphabet: &ZxAlphabet) -> Result<ZxFrame> {
    let symbols = gray_encode(bits, alphabet)?;
    let mut frame = encode(&symbols, rho0, alphabet)?;
    frame.bits = bits.to_vec();
    Ok(frame)
}

/// Result of detecting one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectedBlock {
    pub z_block: Vec<Sign>,
    pub detected_symbol: usize,
    pub hamming_cost: usize,
    /// More than one symbol reached the minimum cost.
    pub tie: bool,
}

/// Minimum-Hamming detection of one block `[rho_{i-1}, z_i]`.
///
/// Candidates are all codewords under both prefix polarities. Ties go to the
/// candidate whose prefix matches `z_b[0]`, then to the lowest symbol index.
pub fn detect_block(z_b: &[Sign], alphabet: &ZxAlphabet) -> Result<DetectedBlock> {
    let m = alphabet.block_len() + 1;
    if z_b.len() != m {
        return Err(Error::Dimension(format!(
            "block of {} samples, expected {m}",
            z_b.len()
        )));
    }
    if z_b.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidParameter("block samples must be +1 or -1".into()));
    }
    if alphabet.lut.is_empty() {
        return Ok(alphabet.search(z_b));
    }
    Ok(alphabet.lut[pattern_index(z_b)].clone())
}

/// Detected symbol only, for hot loops.
pub(crate) fn detect_symbol(z_b: &[Sign], alphabet: &ZxAlphabet) -> usize {
    if alphabet.lut.is_empty() {
        alphabet.search(z_b).detected_symbol
    } else {
        alphabet.lut[pattern_index(z_b)].detected_symbol
    }
}

/// Block-by-block detection of a full received pattern. Each block reuses
/// the last received sample of the previous block as its prefix.
pub fn detect(z: &[Sign], alphabet: &ZxAlphabet) -> Result<Vec<usize>> {
    let l = alphabet.block_len();
    if z.len() < l + 1 || (z.len() - 1) % l != 0 {
        return Err(Error::Dimension(format!(
            "received {} samples, expected 1 + k * {l}",
            z.len()
        )));
    }
    if z.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidParameter("samples must be +1 or -1".into()));
    }
    Ok((0..(z.len() - 1) / l)
        .map(|b| detect_symbol(&z[b * l..=(b + 1) * l], alphabet))
        .collect())
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut n = 0;
    while g != 0 {
        n ^= g;
        g >>= 1;
    }
    n
}

fn bits_per_block(alphabet: &ZxAlphabet) -> Result<usize> {
    alphabet
        .bits_per_block()
        .ok_or_else(|| Error::InvalidParameter(format!("alphabet of {} entries has no Gray labelling", alphabet.len())))
}

/// Maps groups of `log2(len)` bits (MSB first) to alphabet entries such that
/// entry `j` carries the reflected Gray code of `j`.
pub fn gray_encode(bits: &[u8], alphabet: &ZxAlphabet) -> Result<Vec<usize>> {
    let width = bits_per_block(alphabet)?;
    if bits.len() % width != 0 {
        return Err(Error::PayloadLength {
            len: bits.len(),
            block: width,
        });
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::InvalidParameter("payload bits must be 0 or 1".into()));
    }
    Ok(bits
        .chunks(width)
        .map(|c| gray_inverse(c.iter().fold(0, |acc, &b| acc << 1 | b as usize)))
        .collect())
}

pub fn gray_decode(symbols: &[usize], alphabet: &ZxAlphabet) -> Result<Vec<u8>> {
    let width = bits_per_block(alphabet)?;
    let mut out = Vec::with_capacity(symbols.len() * width);
    for &s in symbols {
        alphabet.check(s)?;
        let g = gray(s);
        out.extend((0..width).rev().map(|k| (g >> k & 1) as u8));
    }
    Ok(out)
}
