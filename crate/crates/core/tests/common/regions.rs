//! Reference detection-region listings for a positive prefix.

use zxqos_core::ser_bound::enumerate_detection_regions;
use zxqos_core::{MvnBox, Sign, ZxAlphabet};

const INF: f64 = f64::INFINITY;

struct Row {
    symbol: usize,
    z: &'static [Sign],
    lower: &'static [f64],
    upper: &'static [f64],
}

const M3_ROWS: &[Row] = &[
    Row {
        symbol: 0,
        z: &[1, 1, 1, 1],
        lower: &[0.0, 0.0, 0.0, 0.0],
        upper: &[INF, INF, INF, INF],
    },
    Row {
        symbol: 0,
        z: &[1, 1, -1, 1],
        lower: &[0.0, 0.0, -INF, 0.0],
        upper: &[INF, INF, 0.0, INF],
    },
    Row {
        symbol: 0,
        z: &[1, -1, 1, 1],
        lower: &[0.0, -INF, 0.0, 0.0],
        upper: &[INF, 0.0, INF, INF],
    },
    Row {
        symbol: 1,
        z: &[1, 1, 1, -1],
        lower: &[0.0, 0.0, 0.0, -INF],
        upper: &[INF, INF, INF, 0.0],
    },
    Row {
        symbol: 1,
        z: &[1, -1, 1, -1],
        lower: &[0.0, -INF, 0.0, -INF],
        upper: &[INF, 0.0, INF, 0.0],
    },
    Row {
        symbol: 2,
        z: &[1, 1, -1, -1],
        lower: &[0.0, 0.0, -INF, -INF],
        upper: &[INF, INF, 0.0, 0.0],
    },
    Row {
        symbol: 3,
        z: &[1, -1, -1, -1],
        lower: &[0.0, -INF, -INF, -INF],
        upper: &[INF, 0.0, 0.0, 0.0],
    },
    Row {
        symbol: 3,
        z: &[1, -1, -1, 1],
        lower: &[0.0, -INF, -INF, 0.0],
        upper: &[INF, 0.0, 0.0, INF],
    },
];

const M3_MU: &[[f64; 4]] = &[
    [1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0, -1.0],
];

const M2_ROWS: &[Row] = &[
    Row {
        symbol: 0,
        z: &[1, 1, 1, 1, 1],
        lower: &[0.0, 0.0, 0.0, 0.0, 0.0],
        upper: &[INF, INF, INF, INF, INF],
    },
    Row {
        symbol: 0,
        z: &[1, 1, 1, -1, 1],
        lower: &[0.0, 0.0, 0.0, -INF, 0.0],
        upper: &[INF, INF, INF, 0.0, INF],
    },
    Row {
        symbol: 0,
        z: &[1, 1, -1, 1, 1],
        lower: &[0.0, 0.0, -INF, 0.0, 0.0],
        upper: &[INF, INF, 0.0, INF, INF],
    },
    Row {
        symbol: 0,
        z: &[1, -1, 1, 1, 1],
        lower: &[0.0, -INF, 0.0, 0.0, 0.0],
        upper: &[INF, 0.0, INF, INF, INF],
    },
    Row {
        symbol: 1,
        z: &[1, 1, 1, 1, -1],
        lower: &[0.0, 0.0, 0.0, 0.0, -INF],
        upper: &[INF, INF, INF, INF, 0.0],
    },
    // Printed upper bound drops the last zero of this sequence.
    Row {
        symbol: 1,
        z: &[1, 1, -1, 1, -1],
        lower: &[0.0, 0.0, -INF, 0.0, -INF],
        upper: &[INF, INF, 0.0, INF, INF],
    },
    Row {
        symbol: 1,
        z: &[1, -1, 1, 1, -1],
        lower: &[0.0, -INF, 0.0, 0.0, -INF],
        upper: &[INF, 0.0, INF, INF, 0.0],
    },
    Row {
        symbol: 2,
        z: &[1, 1, 1, -1, -1],
        lower: &[0.0, 0.0, 0.0, -INF, -INF],
        upper: &[INF, INF, INF, 0.0, 0.0],
    },
    Row {
        symbol: 2,
        z: &[1, -1, 1, -1, -1],
        lower: &[0.0, -INF, 0.0, -INF, -INF],
        upper: &[INF, 0.0, INF, 0.0, 0.0],
    },
    Row {
        symbol: 3,
        z: &[1, 1, -1, -1, -1],
        lower: &[0.0, 0.0, -INF, -INF, -INF],
        upper: &[INF, INF, 0.0, 0.0, 0.0],
    },
    Row {
        symbol: 4,
        z: &[1, 1, -1, -1, 1],
        lower: &[0.0, 0.0, -INF, -INF, 0.0],
        upper: &[INF, INF, 0.0, 0.0, INF],
    },
    Row {
        symbol: 5,
        z: &[1, -1, -1, -1, 1],
        lower: &[0.0, -INF, -INF, -INF, 0.0],
        upper: &[INF, 0.0, 0.0, 0.0, INF],
    },
    Row {
        symbol: 5,
        z: &[1, -1, 1, -1, 1],
        lower: &[0.0, -INF, 0.0, -INF, 0.0],
        upper: &[INF, 0.0, INF, 0.0, INF],
    },
    Row {
        symbol: 6,
        z: &[1, -1, -1, -1, -1],
        lower: &[0.0, -INF, -INF, -INF, -INF],
        upper: &[INF, 0.0, 0.0, 0.0, 0.0],
    },
    // Printed box is that of [1, -1, 1, -1, 1], already listed for entry 5.
    Row {
        symbol: 6,
        z: &[1, -1, -1, 1, -1],
        lower: &[0.0, -INF, 0.0, -INF, 0.0],
        upper: &[INF, 0.0, INF, 0.0, INF],
    },
    Row {
        symbol: 7,
        z: &[1, -1, -1, 1, 1],
        lower: &[0.0, -INF, -INF, 0.0, 0.0],
        upper: &[INF, 0.0, 0.0, INF, INF],
    },
];

const M2_MU: &[[f64; 5]] = &[
    [1.0, 1.0, 1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0, 1.0, -1.0],
    [1.0, 1.0, 1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0, 1.0],
    [1.0, -1.0, -1.0, -1.0, 1.0],
    [1.0, -1.0, -1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0, 1.0, 1.0],
];

/// Rows whose printed box disagrees with their printed sequence.
pub const M2_INCONSISTENT: &[usize] = &[5, 14];

fn check(alphabet: &ZxAlphabet, rows: &[Row], mu: &[&[f64]], inconsistent: &[usize]) -> Result<(), String> {
    let gamma = 1.7;
    let regions = enumerate_detection_regions(alphabet, 1, gamma).map_err(|e| e.to_string())?;
    if regions.len() != mu.len() {
        return Err(format!("{} regions, expected {}", regions.len(), mu.len()));
    }
    for (r, m) in regions.iter().zip(mu) {
        let expect: Vec<f64> = m.iter().map(|x| x * gamma).collect();
        if r.mu != expect {
            return Err(format!("mean of entry {}: {:?} vs {:?}", r.symbol, r.mu, expect));
        }
    }
    for (i, row) in rows.iter().enumerate() {
        if !regions[row.symbol].patterns.iter().any(|p| p == row.z) {
            return Err(format!("row {i}: {:?} not detected as entry {}", row.z, row.symbol));
        }
        let from_z = MvnBox::orthant(row.z);
        let printed = MvnBox::new(row.lower.to_vec(), row.upper.to_vec()).map_err(|e| e.to_string())?;
        match (inconsistent.contains(&i), from_z == printed) {
            (false, false) => return Err(format!("row {i}: box disagrees with sequence")),
            (true, true) => return Err(format!("row {i} was expected to be a printing inconsistency")),
            _ => {}
        }
    }
    // The listing covers every positive-prefix pattern exactly once.
    let total: usize = regions.iter().map(|r| r.patterns.len()).sum();
    if total != rows.len() {
        return Err(format!("{total} enumerated patterns, {} listed", rows.len()));
    }
    Ok(())
}

/// Row count checked for the three-sample listing.
pub fn check_single_m3() -> Result<usize, String> {
    let mu: Vec<&[f64]> = M3_MU.iter().map(|m| &m[..]).collect();
    check(&ZxAlphabet::single(3).unwrap(), M3_ROWS, &mu, &[])?;
    Ok(M3_ROWS.len())
}

/// Row count checked for the paired two-sample listing.
pub fn check_paired_m2() -> Result<usize, String> {
    let mu: Vec<&[f64]> = M2_MU.iter().map(|m| &m[..]).collect();
    check(&ZxAlphabet::paired(2).unwrap(), M2_ROWS, &mu, M2_INCONSISTENT)?;
    Ok(M2_ROWS.len())
}
