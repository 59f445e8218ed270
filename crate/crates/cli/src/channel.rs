//! Complex channel matrices from CSV cells such as `0.3-1.2i`.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Parses `a`, `bi`, `a+bi` or `a-bi` (`j` is accepted for `i`).
pub fn parse_complex(cell: &str) -> Option<Complex64> {
    let s: String = cell.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let value = match s.strip_suffix(['i', 'j']) {
        None => Complex64::new(s.parse().ok()?, 0.0),
        Some(body) => {
            // Split at the last sign that is not an exponent sign.
            let bytes = body.as_bytes();
            let split = (1..bytes.len())
                .rev()
                .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
            let (re, im) = match split {
                Some(k) => (body[..k].parse().ok()?, imaginary(&body[k..])?),
                None => (0.0, imaginary(body)?),
            };
            Complex64::new(re, im)
        }
    };
    (value.re.is_finite() && value.im.is_finite()).then_some(value)
}

fn imaginary(coef: &str) -> Option<f64> {
    match coef {
        "" | "+" => Some(1.0),
        "-" => Some(-1.0),
        _ => coef.parse().ok(),
    }
}

/// Reads an `N_u x N_t` matrix, one row per user.
pub fn parse_channel_csv(text: &str) -> Result<DMatrix<Complex64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("channel row {}", r + 1))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                parse_complex(cell).ok_or_else(|| {
                    anyhow!(
                        "channel row {}, column {}: cannot parse {cell:?} as a complex number",
                        r + 1,
                        c + 1
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!(
                    "channel row {} has {} entries, row 1 has {}",
                    r + 1,
                    row.len(),
                    first.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("channel matrix is empty");
    }
    let (n_u, n_t) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n_u, n_t, |r, c| rows[r][c]))
}

/// Inline form: rows separated by `;`, entries by `,`.
pub fn parse_channel_inline(spec: &str) -> Result<DMatrix<Complex64>> {
    parse_channel_csv(&spec.replace(';', "\n"))
}
