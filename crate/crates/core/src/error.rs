use thiserror::Error;

/// Errors produced by the design and evaluation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid symbol index {index} for an alphabet of {size} symbols")]
    InvalidSymbol { index: usize, size: usize },

    #[error("payload of {len} bits is not a multiple of {block} bits per block")]
    PayloadLength { len: usize, block: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("channel matrix is rank deficient or ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("precoding problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver stopped after {iterations} iterations (max violation {max_violation:.3e}, kkt residual {kkt_residual:.3e})")]
    MaxIter {
        iterations: usize,
        max_violation: f64,
        kkt_residual: f64,
    },

    #[error("user {user} ({quadrature}): {source}")]
    User {
        user: usize,
        quadrature: Quadrature,
        #[source]
        source: Box<Error>,
    },

    #[error("target SER {target:.3e} is outside the achievable range ({lo:.3e}, {hi:.3e})")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

/// In-phase or quadrature component of a complex baseband stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Quadrature {
    I,
    Q,
}

impl std::fmt::Display for Quadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quadrature::I => f.write_str("in-phase"),
            Quadrature::Q => f.write_str("quadrature"),
        }
    }
}
