//! Resolved experiments. A [`Job`] is everything needed to regenerate a
//! result set, so the same value drives fresh runs and replays.

use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use zxqos_core::zx::encode;
use zxqos_core::{
    bound_covariance, monte_carlo, ser_cdf, snr_required, sweep, total_transmit_energy, LinkChannel, MonteCarloResult,
    QosDesigner, SerBoundModel, SerBoundReport, SigmaMode, SimConfig, SolveOptions, SweepRow, SystemDims,
    SystemMatrices, UserFrames, ZxAlphabet,
};

/// Column order of simulation CSV files.
pub const SIM_COLUMNS: [&str; 12] = [
    "gamma",
    "ser_mc",
    "ser_ci_lo",
    "ser_ci_hi",
    "ser_ub",
    "ber_mc",
    "ber_ub",
    "etx",
    "snr_req_db",
    "sweep_param",
    "sweep_value",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    SerBound(SerBoundJob),
    Simulate(SimulateJob),
    Design(DesignJob),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerBoundJob {
    pub m_rx: usize,
    pub sigma2: f64,
    pub sigma_mode: SigmaMode,
    pub gamma: Option<f64>,
    pub target_ser: Option<f64>,
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub config: SimConfig,
    /// Channel realizations for an SER CDF run; `None` for a plain run or sweep.
    pub cdf_channels: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignJob {
    pub dims: SystemDims,
    pub rolloff_tx: f64,
    pub rolloff_rx: f64,
    pub sigma2: f64,
    pub sigma_mode: SigmaMode,
    pub gamma: Option<f64>,
    pub target_ser: Option<f64>,
    /// Seed of the random payload.
    pub seed: u64,
    /// `N_u x N_t` entries as `[re, im]`.
    pub channel: Vec<Vec<[f64; 2]>>,
}

pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub struct JobOutput {
    pub artifacts: Vec<Artifact>,
    /// Human-readable table for stdout.
    pub summary: String,
    /// Non-fatal problems such as failed sweep points.
    pub warnings: Vec<String>,
}

impl Job {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::SerBound(_) => None,
            Job::Simulate(j) => Some(j.config.seed),
            Job::Design(j) => Some(j.seed),
        }
    }

    /// Checks that do not need any computation; failures are usage errors.
    pub fn validate(&self) -> Result<()> {
        match self {
            Job::SerBound(j) => j.validate(),
            Job::Simulate(j) => j.validate(),
            Job::Design(j) => j.validate(),
        }
    }

    pub fn run(&self, prefix: &str) -> Result<JobOutput> {
        match self {
            Job::SerBound(j) => j.run(prefix),
            Job::Simulate(j) => j.run(prefix),
            Job::Design(j) => j.run(prefix),
        }
    }
}

fn check_design_target(gamma: Option<f64>, target_ser: Option<f64>) -> Result<()> {
    if let Some(g) = gamma {
        ensure!(g > 0.0 && g.is_finite(), "gamma must be positive, got {g}");
    }
    if let Some(t) = target_ser {
        ensure!(t > 0.0 && t < 1.0, "target SER must lie in (0, 1), got {t}");
    }
    Ok(())
}

fn bound_model(alphabet: &ZxAlphabet, sigma2: f64, mode: SigmaMode) -> Result<SerBoundModel> {
    let sigma = bound_covariance(alphabet, sigma2, mode)?;
    Ok(SerBoundModel::new(alphabet.clone(), sigma)?)
}

fn json_bytes(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl SerBoundJob {
    fn validate(&self) -> Result<()> {
        ensure!(matches!(self.m_rx, 2 | 3), "--mrx must be 2 or 3, got {}", self.m_rx);
        ensure!(
            self.sigma2 > 0.0 && self.sigma2.is_finite(),
            "sigma2 must be positive, got {}",
            self.sigma2
        );
        ensure!(
            self.gamma.is_some() || self.target_ser.is_some() || self.grid.is_some(),
            "give --gamma, --target-ser or --gamma-grid"
        );
        ensure!(
            !(self.gamma.is_some() && self.target_ser.is_some()),
            "--gamma and --target-ser are exclusive"
        );
        check_design_target(self.gamma, self.target_ser)?;
        if let Some(grid) = &self.grid {
            ensure!(!grid.is_empty(), "gamma grid is empty");
            for &g in grid {
                check_design_target(Some(g), None)?;
            }
        }
        Ok(())
    }

    fn run(&self, prefix: &str) -> Result<JobOutput> {
        let alphabet = ZxAlphabet::for_oversampling(self.m_rx)?;
        let model = bound_model(&alphabet, self.sigma2, self.sigma_mode)?;
        let gamma = match (self.gamma, self.target_ser) {
            (Some(g), _) => Some(g),
            (None, Some(t)) => Some(model.gamma_for_ser(t).context("inverting the SER bound")?),
            (None, None) => None,
        };
        let report = gamma.map(|g| model.evaluate(g)).transpose()?;
        let grid: Vec<SerBoundReport> = match &self.grid {
            Some(values) => values.iter().map(|&g| model.evaluate(g)).collect::<Result<_, _>>()?,
            None => Vec::new(),
        };

        let mut summary = String::new();
        writeln!(summary, "{:>10} {:>14} {:>14}", "gamma", "ser_ub", "ber_ub")?;
        for r in report.iter().chain(&grid) {
            writeln!(summary, "{:>10.4} {:>14.6e} {:>14.6e}", r.gamma, r.ser_ub, r.ber_ub)?;
        }

        let mut artifacts = vec![Artifact {
            name: format!("{prefix}.json"),
            bytes: json_bytes(&json!({
                "m_rx": self.m_rx,
                "sigma2": self.sigma2,
                "sigma_mode": self.sigma_mode,
                "target_ser": self.target_ser,
                "report": report,
                "grid": grid,
            }))?,
        }];
        if !grid.is_empty() {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["gamma", "ser_ub", "ber_ub"])?;
            for r in &grid {
                w.write_record([num(r.gamma), num(r.ser_ub), num(r.ber_ub)])?;
            }
            artifacts.push(Artifact {
                name: format!("{prefix}.csv"),
                bytes: w.into_inner()?,
            });
        }
        Ok(JobOutput {
            artifacts,
            summary,
            warnings: Vec::new(),
        })
    }
}

fn param_name(row: &SweepRow) -> String {
    let value = serde_json::to_value(row.param).ok();
    value.and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn sim_record(r: Option<&MonteCarloResult>, row: Option<&SweepRow>) -> Vec<String> {
    let mut rec = match r {
        Some(r) => vec![
            num(r.gamma),
            num(r.ser),
            num(r.ser_ci_lo),
            num(r.ser_ci_hi),
            opt(r.ser_ub),
            opt(r.ber),
            opt(r.ber_ub),
            num(r.etx_mean),
            num(r.snr_req_db),
        ],
        None => vec![String::new(); 9],
    };
    match row {
        Some(row) => {
            rec.push(param_name(row));
            rec.push(num(row.value));
            rec.push(row.error.clone().unwrap_or_default());
        }
        None => rec.extend([String::new(), String::new(), String::new()]),
    }
    rec
}

impl SimulateJob {
    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if let Some(grid) = &self.config.sweep {
            ensure!(!grid.values.is_empty(), "sweep grid is empty");
            ensure!(self.cdf_channels.is_none(), "a CDF run cannot also sweep");
        }
        if let Some(n) = self.cdf_channels {
            ensure!(n >= 50, "a CDF needs at least 50 channel realizations, got {n}");
        }
        Ok(())
    }

    fn run(&self, prefix: &str) -> Result<JobOutput> {
        if let Some(n) = self.cdf_channels {
            return self.run_cdf(prefix, n);
        }
        let mut summary = String::new();
        writeln!(
            summary,
            "{:>14} {:>10} {:>12} {:>25} {:>12} {:>12} {:>11}",
            "point", "gamma", "ser_mc", "95% ci", "ser_ub", "etx", "snr_req_db"
        )?;
        let line = |s: &mut String, label: &str, r: &MonteCarloResult| {
            let ub = r.ser_ub.map(|u| format!("{u:.4e}")).unwrap_or_else(|| "-".into());
            let ci = format!("[{:.3e}, {:.3e}]", r.ser_ci_lo, r.ser_ci_hi);
            writeln!(
                s,
                "{label:>14} {:>10.4} {:>12.4e} {ci:>25} {ub:>12} {:>12.4} {:>11.3}",
                r.gamma, r.ser, r.etx_mean, r.snr_req_db
            )
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SIM_COLUMNS)?;
        let mut warnings = Vec::new();
        let json = if self.config.sweep.is_some() {
            let rows = sweep(&self.config)?;
            for row in &rows {
                w.write_record(sim_record(row.result.as_ref(), Some(row)))?;
                let label = format!("{}={}", param_name(row), row.value);
                match (&row.result, &row.error) {
                    (Some(r), _) => line(&mut summary, &label, r)?,
                    (None, e) => {
                        let msg = format!(
                            "sweep point {:?} = {}: {}",
                            row.param,
                            row.value,
                            e.clone().unwrap_or_default()
                        );
                        writeln!(summary, "{msg}")?;
                        warnings.push(msg);
                    }
                }
            }
            json!({ "config": self.config, "rows": rows })
        } else {
            let r = monte_carlo(&self.config)?;
            w.write_record(sim_record(Some(&r), None))?;
            line(&mut summary, "-", &r)?;
            json!({ "config": self.config, "result": r })
        };
        Ok(JobOutput {
            artifacts: vec![
                Artifact {
                    name: format!("{prefix}.csv"),
                    bytes: w.into_inner()?,
                },
                Artifact {
                    name: format!("{prefix}.json"),
                    bytes: json_bytes(&json)?,
                },
            ],
            summary,
            warnings,
        })
    }

    fn run_cdf(&self, prefix: &str, n_channels: usize) -> Result<JobOutput> {
        let r = ser_cdf(&self.config, n_channels)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ser", "cdf"])?;
        for (s, c) in r.grid.iter().zip(&r.cdf) {
            w.write_record([num(*s), num(*c)])?;
        }
        let mut summary = format!("gamma {:.4}, {n_channels} channel realizations\n", r.gamma);
        let mean = r.ser.iter().sum::<f64>() / r.ser.len() as f64;
        writeln!(
            summary,
            "mean SER {mean:.4e}, max SER {:.4e}",
            r.grid.last().copied().unwrap_or(0.0)
        )?;
        let at_target = self.config.target_ser.map(|t| r.cdf_at(t));
        if let (Some(t), Some(f)) = (self.config.target_ser, at_target) {
            writeln!(summary, "fraction with SER <= {t:e}: {f:.4}")?;
        }
        Ok(JobOutput {
            artifacts: vec![
                Artifact {
                    name: format!("{prefix}.csv"),
                    bytes: w.into_inner()?,
                },
                Artifact {
                    name: format!("{prefix}.json"),
                    bytes: json_bytes(&json!({
                        "config": self.config,
                        "channels": n_channels,
                        "fraction_at_target": at_target,
                        "cdf": r,
                    }))?,
                },
            ],
            summary,
            warnings: Vec::new(),
        })
    }
}

impl DesignJob {
    pub fn channel_matrix(&self) -> DMatrix<Complex64> {
        let n_t = self.channel.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.channel.len(), n_t, |r, c| {
            let [re, im] = self.channel[r][c];
            Complex64::new(re, im)
        })
    }

    pub fn channel_entries(h: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
        (0..h.nrows())
            .map(|r| (0..h.ncols()).map(|c| [h[(r, c)].re, h[(r, c)].im]).collect())
            .collect()
    }

    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        ensure!(
            self.gamma.is_some() != self.target_ser.is_some(),
            "give exactly one of --gamma and --target-ser"
        );
        check_design_target(self.gamma, self.target_ser)?;
        ensure!(
            self.sigma2 > 0.0 || self.target_ser.is_none(),
            "--target-ser needs sigma2 > 0"
        );
        let n_t = self.channel.first().map_or(0, Vec::len);
        ensure!(
            self.channel.len() == self.dims.n_users && n_t == self.dims.n_tx,
            "channel is {}x{}, dimensions say {}x{}",
            self.channel.len(),
            n_t,
            self.dims.n_users,
            self.dims.n_tx
        );
        let block = ZxAlphabet::for_oversampling(self.dims.m_rx)?.block_symbols();
        if self.dims.n_symbols % block != 0 {
            bail!(
                "N = {} must be a multiple of {block} at M_Rx = {}",
                self.dims.n_symbols,
                self.dims.m_rx
            );
        }
        Ok(())
    }

    fn run(&self, prefix: &str) -> Result<JobOutput> {
        let d = self.dims;
        let alphabet = ZxAlphabet::for_oversampling(d.m_rx)?;
        let gamma = match (self.gamma, self.target_ser) {
            (Some(g), _) => g,
            (None, Some(t)) => bound_model(&alphabet, self.sigma2, self.sigma_mode)?
                .gamma_for_ser(t)
                .context("inverting the SER bound")?,
            (None, None) => unreachable!("validated"),
        };
        let link = LinkChannel::new(self.channel_matrix()).context("spatial precoder")?;
        let sys = Arc::new(SystemMatrices::new(d, self.rolloff_tx, self.rolloff_rx)?);

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let blocks = d.n_symbols / alphabet.block_symbols();
        let mut frame = || {
            let symbols: Vec<usize> = (0..blocks).map(|_| rng.random_range(0..alphabet.len())).collect();
            encode(&symbols, 1, &alphabet)
        };
        let frames = (0..d.n_users)
            .map(|_| {
                Ok(UserFrames {
                    in_phase: frame()?,
                    quadrature: frame()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let designer = QosDesigner::new(sys.clone(), SolveOptions::default());
        let pre = designer
            .precode(&frames, link.beta, gamma)
            .context("temporal precoder")?;
        let e_tx = total_transmit_energy(&link.p_sp, &pre.complex_vectors(), &sys.w)?;
        let snr = snr_required(e_tx, d.n_q(), self.sigma2, self.rolloff_tx);

        let mut max_violation = f64::NEG_INFINITY;
        let mut kkt_residual = 0.0f64;
        let mut summary = String::new();
        writeln!(
            summary,
            "gamma {gamma:.4}, beta {:.6}, E_Tx {e_tx:.6}, SNR_Req {:.3} dB",
            link.beta, snr.db
        )?;
        writeln!(
            summary,
            "{:>5} {:>4} {:>10} {:>14} {:>12}",
            "user", "quad", "status", "max_violation", "kkt"
        )?;
        let users: Vec<_> = pre
            .users
            .iter()
            .zip(&frames)
            .enumerate()
            .map(|(k, (u, f))| {
                for (q, s) in [("I", &u.in_phase), ("Q", &u.quadrature)] {
                    max_violation = max_violation.max(s.max_violation);
                    kkt_residual = kkt_residual.max(s.kkt_residual);
                    let _ = writeln!(
                        summary,
                        "{k:>5} {q:>4} {:>10} {:>14.3e} {:>12.3e}",
                        format!("{:?}", s.status),
                        s.max_violation,
                        s.kkt_residual
                    );
                }
                let quad = |frame: &zxqos_core::ZxFrame, s: &zxqos_core::PrecodeSolution| {
                    json!({
                        "symbols": frame.symbols,
                        "c_out": frame.c_out,
                        "p": s.p,
                        "objective": s.objective,
                        "max_violation": s.max_violation,
                        "kkt_residual": s.kkt_residual,
                        "iterations": s.iterations,
                        "status": s.status,
                    })
                };
                json!({
                    "user": k,
                    "in_phase": quad(&f.in_phase, &u.in_phase),
                    "quadrature": quad(&f.quadrature, &u.quadrature),
                })
            })
            .collect();
        let p_sp = DesignJob::channel_entries(&link.p_sp);
        let doc = json!({
            "dims": d,
            "n_q": d.n_q(),
            "gamma": gamma,
            "target_ser": self.target_ser,
            "beta": link.beta,
            "sigma2": self.sigma2,
            "e_tx": e_tx,
            "snr_req_db": snr.db,
            "max_violation": max_violation,
            "kkt_residual": kkt_residual,
            "p_sp": p_sp,
            "users": users,
        });
        Ok(JobOutput {
            artifacts: vec![Artifact {
                name: format!("{prefix}.json"),
                bytes: json_bytes(&doc)?,
            }],
            summary,
            warnings: Vec::new(),
        })
    }
}
