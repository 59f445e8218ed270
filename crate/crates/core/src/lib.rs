//! QoS temporal precoding for one-bit oversampled MIMO downlinks with
//! time-instance zero-crossing modulation.

pub mod error;
pub mod mvn;
pub mod precoding;
pub mod qp;
pub mod ser_bound;
pub mod sim;
pub mod waveform;
pub mod zx;

pub use error::{Error, Quadrature, Result};
pub use mvn::{mvn_cdf, MvnBox, MvnEstimate, MvnOptions};
pub use precoding::{
    build_qos_problem, qos_precode, snr_required, total_transmit_energy, user_energy, zf_precoder, QosDesigner, Snr,
    SpatialPrecoder, TemporalPrecoder, UserFrames, UserPrecoder,
};
pub use qp::{solve, verify_kkt, KktReport, PrecodeProblem, PrecodeSolution, SolveOptions, SolveStatus};
pub use ser_bound::{
    bound_covariance, enumerate_detection_regions, gamma_for_ser, ser_upper_bound, DetectionRegion, SerBoundModel,
    SerBoundReport, SigmaMode,
};
pub use sim::{
    draw_channel, monte_carlo, ser_cdf, sweep, ChannelMode, LinkChannel, MonteCarloResult, NoiseDraw, SerCdfResult,
    SimConfig, Simulator, SweepGrid, SweepParam, SweepRow, TrialOutcome,
};
pub use waveform::{Normalization, PulseKind, PulseShape, SystemDims, SystemMatrices};
pub use zx::{Sign, ZxAlphabet, ZxFrame};
