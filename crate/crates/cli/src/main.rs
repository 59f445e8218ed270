//! `zxqos`: SER bounds, link simulations and precoder designs from the command line.
//!
//! Exit status: 0 on success, 1 on runtime or solver failure, 2 on usage or
//! configuration errors. The worker thread count follows `RAYON_NUM_THREADS`;
//! results do not depend on it.

mod channel;
mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zxqos_core::{ChannelMode, SigmaMode, SimConfig, SweepGrid, SweepParam, SystemDims};

use jobs::{DesignJob, Job, JobOutput, SerBoundJob, SimulateJob};
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "zxqos",
    version,
    about = "QoS precoding with zero-crossing modulation for 1-bit oversampled downlinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semi-analytical SER upper bound, or the gamma meeting a target SER.
    SerBound(SerBoundArgs),
    /// Monte Carlo link simulation, sweep or SER CDF.
    Simulate(Box<SimulateArgs>),
    /// QoS precoder for one channel and a random payload.
    Design(DesignArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for result files and the manifest.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// File name stem; defaults to the subcommand name.
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaModeArg {
    Correlated,
    White,
}

impl From<SigmaModeArg> for SigmaMode {
    fn from(m: SigmaModeArg) -> Self {
        match m {
            SigmaModeArg::Correlated => SigmaMode::Correlated,
            SigmaModeArg::White => SigmaMode::White,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelModeArg {
    Fixed,
    Redraw,
}

#[derive(Args)]
struct SerBoundArgs {
    /// Receive oversampling factor (2 or 3).
    #[arg(long)]
    mrx: usize,
    #[arg(long, conflicts_with = "target_ser")]
    gamma: Option<f64>,
    #[arg(long)]
    target_ser: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_enum, default_value = "correlated")]
    sigma_mode: SigmaModeArg,
    /// Inclusive range start:step:stop, written to CSV.
    #[arg(long)]
    gamma_grid: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML or JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mrx: Option<usize>,
    /// Defaults to M_Rx when --mrx is given.
    #[arg(long)]
    mtx: Option<usize>,
    /// Symbols per frame.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    ntx: Option<usize>,
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long, conflicts_with = "target_ser")]
    gamma: Option<f64>,
    #[arg(long)]
    target_ser: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, value_enum)]
    sigma_mode: Option<SigmaModeArg>,
    /// Roll-off of both filters.
    #[arg(long)]
    rolloff: Option<f64>,
    /// Frames per run, or per channel realization with --cdf.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop once this many symbol errors are counted.
    #[arg(long)]
    target_errors: Option<u64>,
    #[arg(long, value_enum)]
    channel_mode: Option<ChannelModeArg>,
    /// Skip the semi-analytical bound column.
    #[arg(long)]
    no_bound: bool,
    /// Inclusive range start:step:stop.
    #[arg(long, group = "grid")]
    gamma_grid: Option<String>,
    /// Comma-separated target SER values.
    #[arg(long, group = "grid", value_delimiter = ',')]
    target_ser_grid: Option<Vec<f64>>,
    /// Comma-separated frame lengths.
    #[arg(long, group = "grid", value_delimiter = ',')]
    n_grid: Option<Vec<f64>>,
    /// Comma-separated transmit antenna counts.
    #[arg(long, group = "grid", value_delimiter = ',')]
    ntx_grid: Option<Vec<f64>>,
    /// Per-channel SER and its empirical CDF.
    #[arg(long, conflicts_with = "grid")]
    cdf: bool,
    /// Channel realizations for --cdf.
    #[arg(long, default_value_t = 200)]
    channels: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    mrx: usize,
    #[arg(long)]
    mtx: Option<usize>,
    #[arg(long)]
    n: usize,
    /// Inline channel, rows separated by ';' and entries by ',', e.g. "1+0.5i,0.2i;-1,1".
    #[arg(long, required_unless_present = "channel_file", conflicts_with = "channel_file")]
    channel: Option<String>,
    /// CSV file with one row per user and entries like 0.3-1.2i.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    #[arg(long, required_unless_present = "target_ser", conflicts_with = "target_ser")]
    gamma: Option<f64>,
    #[arg(long)]
    target_ser: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_enum, default_value = "correlated")]
    sigma_mode: SigmaModeArg,
    #[arg(long, default_value_t = zxqos_core::waveform::DEFAULT_ROLLOFF)]
    rolloff: f64,
    /// Seed of the random payload.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write regenerated files and a new manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare regenerated files byte for byte with the recorded ones.
    #[arg(long)]
    verify: bool,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// `start:step:stop`, inclusive of `stop` up to rounding.
fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, step, stop] = parts[..] else {
        bail!("grid {spec:?} is not start:step:stop");
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("grid {spec:?}: {s:?} is not a number"))
    };
    let (start, step, stop) = (parse(start)?, parse(step)?, parse(stop)?);
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        bail!("grid {spec:?} needs step > 0 and stop >= start");
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if count > 100_000 {
        bail!("grid {spec:?} has {count} points");
    }
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
    } else {
        toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
    }
}

fn simulate_job(a: &SimulateArgs) -> Result<SimulateJob> {
    let mut cfg = match &a.config {
        Some(path) => load_config(path)?,
        None => {
            let mut c = SimConfig::new(SystemDims::siso(1, 3)?, 1.0, 10_000, 1);
            c.gamma = None;
            c
        }
    };
    if let Some(m) = a.mrx {
        cfg.dims.m_rx = m;
        cfg.dims.m_tx = m;
    }
    if let Some(m) = a.mtx {
        cfg.dims.m_tx = m;
    }
    if let Some(n) = a.n {
        cfg.dims.n_symbols = n;
    }
    if let Some(n) = a.ntx {
        cfg.dims.n_tx = n;
    }
    if let Some(n) = a.nu {
        cfg.dims.n_users = n;
    }
    if a.gamma.is_some() {
        cfg.gamma = a.gamma;
        cfg.target_ser = None;
    }
    if a.target_ser.is_some() {
        cfg.target_ser = a.target_ser;
        cfg.gamma = None;
    }
    if let Some(s) = a.sigma2 {
        cfg.sigma2 = s;
    }
    if let Some(m) = a.sigma_mode {
        cfg.sigma_mode = m.into();
    }
    if let Some(r) = a.rolloff {
        cfg.rolloff_tx = r;
        cfg.rolloff_rx = r;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.target_errors.is_some() {
        cfg.target_errors = a.target_errors;
    }
    if let Some(m) = a.channel_mode {
        cfg.channel_mode = match m {
            ChannelModeArg::Fixed => ChannelMode::Fixed,
            ChannelModeArg::Redraw => ChannelMode::Redraw,
        };
    }
    if a.no_bound {
        cfg.bound = false;
    }
    let grid = if let Some(spec) = &a.gamma_grid {
        Some((SweepParam::Gamma, parse_range(spec)?))
    } else if let Some(v) = &a.target_ser_grid {
        Some((SweepParam::TargetSer, v.clone()))
    } else if let Some(v) = &a.n_grid {
        Some((SweepParam::NSymbols, v.clone()))
    } else {
        a.ntx_grid.as_ref().map(|v| (SweepParam::NTx, v.clone()))
    };
    if let Some((param, values)) = grid {
        cfg.sweep = Some(SweepGrid { param, values });
    }
    // Threshold sweeps set the design threshold per point; the base value is a placeholder.
    if let Some(grid) = &cfg.sweep {
        let threshold = matches!(grid.param, SweepParam::Gamma | SweepParam::TargetSer);
        if threshold && cfg.gamma.is_none() && cfg.target_ser.is_none() {
            cfg.gamma = grid
                .values
                .first()
                .copied()
                .filter(|_| grid.param == SweepParam::Gamma)
                .or(Some(1.0));
        }
    }
    Ok(SimulateJob {
        config: cfg,
        cdf_channels: a.cdf.then_some(a.channels),
    })
}

fn design_job(a: &DesignArgs) -> Result<DesignJob> {
    let h = match (&a.channel, &a.channel_file) {
        (Some(inline), _) => channel::parse_channel_inline(inline)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            channel::parse_channel_csv(&text).with_context(|| path.display().to_string())?
        }
        (None, None) => bail!("give --channel or --channel-file"),
    };
    Ok(DesignJob {
        dims: SystemDims {
            n_symbols: a.n,
            m_rx: a.mrx,
            m_tx: a.mtx.unwrap_or(a.mrx),
            n_tx: h.ncols(),
            n_users: h.nrows(),
        },
        rolloff_tx: a.rolloff,
        rolloff_rx: a.rolloff,
        sigma2: a.sigma2,
        sigma_mode: a.sigma_mode.into(),
        gamma: a.gamma,
        target_ser: a.target_ser,
        seed: a.seed,
        channel: DesignJob::channel_entries(&h),
    })
}

fn ser_bound_job(a: &SerBoundArgs) -> Result<SerBoundJob> {
    Ok(SerBoundJob {
        m_rx: a.mrx,
        sigma2: a.sigma2,
        sigma_mode: a.sigma_mode.into(),
        gamma: a.gamma,
        target_ser: a.target_ser,
        grid: a.gamma_grid.as_deref().map(parse_range).transpose()?,
    })
}

/// Runs `job`, writes its files and manifest to `dir`, prints the summary.
fn execute(job: Job, dir: &Path, prefix: &str) -> Result<(), Failure> {
    job.validate().map_err(usage)?;
    let started = manifest::now();
    let output = job.run(prefix).map_err(runtime)?;
    write_outputs(job, &output, dir, prefix, started).map_err(runtime)
}

fn write_outputs(job: Job, output: &JobOutput, dir: &Path, prefix: &str, started: String) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut names = Vec::new();
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
        names.push(a.name.clone());
    }
    let m = RunManifest::new(job, prefix.to_string(), started, names);
    let mpath = RunManifest::path(dir, prefix);
    std::fs::write(&mpath, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", mpath.display()))?;
    print!("{}", output.summary);
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} and {} result file(s) in {}",
        mpath.display(),
        m.outputs.len(),
        dir.display()
    );
    Ok(())
}

fn replay(a: &ReplayArgs) -> Result<(), Failure> {
    if a.out.is_none() && !a.verify {
        return Err(usage(anyhow!("replay needs --out, --verify or both")));
    }
    let m = RunManifest::read(&a.manifest).map_err(usage)?;
    let Some(dir) = a.out.as_deref() else {
        return verify(a, &m, &run_recorded(&m)?);
    };
    if a.verify {
        let source = a.manifest.canonicalize().ok();
        if source.is_some() && source == RunManifest::path(dir, &m.prefix).canonicalize().ok() {
            return Err(usage(anyhow!("--out would overwrite the files being verified")));
        }
    }
    let started = manifest::now();
    let output = run_recorded(&m)?;
    if a.verify {
        verify(a, &m, &output)?;
    }
    write_outputs(m.job, &output, dir, &m.prefix, started).map_err(runtime)
}

fn run_recorded(m: &RunManifest) -> Result<JobOutput, Failure> {
    m.job.validate().map_err(usage)?;
    m.job.run(&m.prefix).map_err(runtime)
}

fn verify(a: &ReplayArgs, m: &RunManifest, output: &JobOutput) -> Result<(), Failure> {
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let mut mismatches = Vec::new();
    let produced: Vec<&str> = output.artifacts.iter().map(|x| x.name.as_str()).collect();
    if produced != m.outputs.iter().map(String::as_str).collect::<Vec<_>>() {
        mismatches.push(format!("outputs {produced:?} differ from recorded {:?}", m.outputs));
    }
    for art in &output.artifacts {
        let path = base.join(&art.name);
        match std::fs::read(&path) {
            Ok(bytes) if bytes == art.bytes => {}
            Ok(_) => mismatches.push(format!("{} differs", path.display())),
            Err(e) => mismatches.push(format!("{}: {e}", path.display())),
        }
    }
    if !mismatches.is_empty() {
        return Err(runtime(anyhow!("replay mismatch: {}", mismatches.join("; "))));
    }
    println!(
        "verified {} file(s) against {}",
        output.artifacts.len(),
        a.manifest.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SerBound(a) => {
            let job = ser_bound_job(&a).map_err(usage)?;
            execute(
                Job::SerBound(job),
                &a.output.out,
                a.output.prefix.as_deref().unwrap_or("ser_bound"),
            )
        }
        Command::Simulate(a) => {
            let job = simulate_job(&a).map_err(usage)?;
            let default = if a.cdf { "cdf" } else { "simulate" };
            execute(
                Job::Simulate(job),
                &a.output.out,
                a.output.prefix.as_deref().unwrap_or(default),
            )
        }
        Command::Design(a) => {
            let job = design_job(&a).map_err(usage)?;
            execute(
                Job::Design(job),
                &a.output.out,
                a.output.prefix.as_deref().unwrap_or("design"),
            )
        }
        Command::Replay(a) => replay(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
