//! Command-line experiment runner.
//!
//! One invocation runs one experiment, writes its CSV results into the output
//! directory, then writes `manifest.json` listing every file with its SHA-256.
//! Configuration comes from an optional TOML file; flags override it. All
//! randomness derives from the mandatory seed, and parallel work merges in a
//! fixed order, so outputs are byte-identical for any `CROSSPOINT_THREADS`.
//! The manifest's `wall_time_s` is the one field that varies between runs.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{parse_grid, ExperimentConfig, InitDemoSection, OdeModel, OdeSection, SweepSection, TrainSection};

use crate::crossbar::{relax_to_symmetry, DeviceArray, ZeroShiftMode};
use crate::dynamics::{integrate_sgd_ode, integrate_shd_ode, TimeGrid};
use crate::error::{Error, Result};
use crate::networks::{train_lstm, Corpus, CurvePoint, LstmConfig, TrainRun};
use crate::rng::{mix, seeded, stream};
use crate::scalar::{residual_sweep, run_sgd_scalar, run_shd_scalar, Algorithm, SweepSpec};
use crate::trainers::{BackendRegistry, ShdMode};

pub const THREADS_ENV: &str = "CROSSPOINT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "crosspoint", version, about = "Analog crossbar training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed (required here or in the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: results].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-weight SGD on a pulsed device; writes trajectory.csv (step,g).
    ScalarSgd(ScalarSgdArgs),
    /// Single-weight coupled A/C training; writes trajectory.csv (step,a,c).
    ScalarShd(ScalarShdArgs),
    /// Final-weight residuals over a grid of optima and seeds; writes
    /// residuals.csv (g0,seed,residual).
    SweepResidual(SweepArgs),
    /// Continuum equations by RK4; writes ode_trajectory.csv (t,a,c,h for the
    /// coupled model, t,g for SGD).
    Ode(OdeArgs),
    /// Character-level LSTM training; writes learning_curve.csv
    /// (epoch,seed,backend,kappa,cross_entropy).
    Train(TrainArgs),
    /// Zero-shift relaxation of a tile toward its symmetry points; writes
    /// zero_shift.csv (pulses,mean_abs_offset,max_abs_offset).
    InitDemo(InitDemoArgs),
}

#[derive(Debug, Args)]
pub struct ScalarSgdArgs {
    #[command(flatten)]
    pub common: Common,
    /// Device asymmetry κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Optimum g0 of the quadratic loss.
    #[arg(long)]
    pub g0: Option<f64>,
    /// Training steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Standard deviation of the gradient noise ε.
    #[arg(long)]
    pub noise_eps: Option<f64>,
    /// Device step size.
    #[arg(long)]
    pub dw0: Option<f64>,
    /// Device symmetry point.
    #[arg(long)]
    pub w_sym: Option<f64>,
    /// Record every N steps.
    #[arg(long)]
    pub record_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScalarShdArgs {
    #[command(flatten)]
    pub common: Common,
    /// Asymmetry of the A device.
    #[arg(long)]
    pub kappa_a: Option<f64>,
    /// Asymmetry of the C device.
    #[arg(long)]
    pub kappa_c: Option<f64>,
    /// Optimum g0 of the quadratic loss.
    #[arg(long)]
    pub g0: Option<f64>,
    /// Training steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Standard deviation of the gradient noise ε.
    #[arg(long)]
    pub noise_eps: Option<f64>,
    /// Updates between transfers.
    #[arg(long)]
    pub tau: Option<u64>,
    /// 3-array or 4-array.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ShdMode>,
    /// Record every N steps.
    #[arg(long)]
    pub record_every: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// sgd or shd.
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Option<Algorithm>,
    /// Asymmetry of the trained device (A for shd).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// lo:hi:n, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    pub g0_grid: Option<String>,
    #[arg(long)]
    /// Seeds per grid point.
    pub seeds: Option<u64>,
    /// Training steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Standard deviation of the gradient noise ε.
    #[arg(long)]
    pub noise_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    pub common: Common,
    /// shd or sgd.
    #[arg(long, value_parser = parse_ode_model)]
    pub model: Option<OdeModel>,
    /// Asymmetry of the A device.
    #[arg(long)]
    pub kappa_a: Option<f64>,
    /// Asymmetry of the C device.
    #[arg(long)]
    pub kappa_c: Option<f64>,
    /// Asymmetry of the single SGD weight.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Optimum g0 of the quadratic loss.
    #[arg(long)]
    pub g0: Option<f64>,
    /// Learning rate of A.
    #[arg(long)]
    pub eta_a: Option<f64>,
    /// Learning rate of C.
    #[arg(long)]
    pub eta_c: Option<f64>,
    /// Integration end time (in steps).
    #[arg(long)]
    pub t_end: Option<f64>,
    /// RK4 step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Record every N integration steps.
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Integrate with gradient noise drawn from the seed.
    #[arg(long)]
    pub stochastic: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Registered backend name (digital-fp, analog-sgd, analog-shd, analog-shd4).
    /// Without --config this also selects the backend's calibrated settings.
    #[arg(long)]
    pub backend: Option<String>,
    /// Asymmetry κ of every device array.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Text file to train on.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// LSTM hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Learning rate (η_A for coupled arrays).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Truncation window in characters.
    #[arg(long)]
    pub bptt: Option<usize>,
    /// Updates between transfers (coupled arrays).
    #[arg(long)]
    pub tau: Option<u64>,
    /// Independent runs.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Train on the first N characters only.
    #[arg(long)]
    pub max_chars: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InitDemoArgs {
    #[command(flatten)]
    pub common: Common,
    /// Tile rows.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Tile columns.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Pulses per device [default: 20·range/dw0].
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Device asymmetry κ.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Spread of device symmetry points.
    #[arg(long)]
    pub wsym_sigma: Option<f64>,
    /// alternating or random-order.
    #[arg(long, value_parser = parse_zero_shift)]
    pub mode: Option<ZeroShiftMode>,
    /// Rows written to zero_shift.csv.
    #[arg(long)]
    pub checkpoints: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<ShdMode, String> {
    match s {
        "3-array" => Ok(ShdMode::ThreeArray),
        "4-array" => Ok(ShdMode::FourArray),
        _ => Err("expected 3-array or 4-array".into()),
    }
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ode_model(s: &str) -> std::result::Result<OdeModel, String> {
    match s {
        "shd" => Ok(OdeModel::Shd),
        "sgd" => Ok(OdeModel::Sgd),
        _ => Err("expected shd or sgd".into()),
    }
}

fn parse_zero_shift(s: &str) -> std::result::Result<ZeroShiftMode, String> {
    match s {
        "alternating" => Ok(ZeroShiftMode::Alternating),
        "random-order" => Ok(ZeroShiftMode::RandomOrder),
        _ => Err("expected alternating or random-order".into()),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ScalarSgd(_) => "scalar-sgd",
            Command::ScalarShd(_) => "scalar-shd",
            Command::SweepResidual(_) => "sweep-residual",
            Command::Ode(_) => "ode",
            Command::Train(_) => "train",
            Command::InitDemo(_) => "init-demo",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::ScalarSgd(a) => &a.common,
            Command::ScalarShd(a) => &a.common,
            Command::SweepResidual(a) => &a.common,
            Command::Ode(a) => &a.common,
            Command::Train(a) => &a.common,
            Command::InitDemo(a) => &a.common,
        }
    }

    /// Loads the config file (if any) and applies this command's flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let common = self.common();
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if common.seed.is_some() {
            cfg.seed = common.seed;
        }
        if common.out.is_some() {
            cfg.out_dir = common.out.clone();
        }
        match self {
            Command::ScalarSgd(a) => {
                set(&mut cfg.sgd.device.kappa, a.kappa);
                set(&mut cfg.sgd.device.dw0, a.dw0);
                set(&mut cfg.sgd.device.w_sym, a.w_sym);
                set(&mut cfg.sgd.record_every, a.record_every);
                set(&mut cfg.problem.g0, a.g0);
                set(&mut cfg.problem.n_steps, a.steps);
                set(&mut cfg.problem.noise_eps, a.noise_eps);
            }
            Command::ScalarShd(a) => {
                set(&mut cfg.shd.device_a.kappa, a.kappa_a);
                set(&mut cfg.shd.device_c.kappa, a.kappa_c);
                set(&mut cfg.shd.mode, a.mode);
                set(&mut cfg.shd.record_every, a.record_every);
                if a.tau.is_some() {
                    cfg.shd.tau = a.tau;
                }
                set(&mut cfg.problem.g0, a.g0);
                set(&mut cfg.problem.n_steps, a.steps);
                set(&mut cfg.problem.noise_eps, a.noise_eps);
            }
            Command::SweepResidual(a) => {
                set(&mut cfg.sweep.algorithm, a.algo);
                set(&mut cfg.sweep.g0_grid, a.g0_grid.clone());
                set(&mut cfg.sweep.seeds, a.seeds);
                match cfg.sweep.algorithm {
                    Algorithm::Sgd => set(&mut cfg.sgd.device.kappa, a.kappa),
                    Algorithm::Shd => set(&mut cfg.shd.device_a.kappa, a.kappa),
                }
                set(&mut cfg.problem.n_steps, a.steps);
                set(&mut cfg.problem.noise_eps, a.noise_eps);
            }
            Command::Ode(a) => {
                let p = &mut cfg.ode.params;
                set(&mut cfg.ode.model, a.model);
                set(&mut p.kappa_a, a.kappa_a);
                set(&mut p.kappa_c, a.kappa_c);
                set(&mut p.kappa, a.kappa);
                set(&mut p.g0, a.g0);
                set(&mut p.eta_a, a.eta_a);
                set(&mut p.eta_c, a.eta_c);
                set(&mut cfg.ode.t_end, a.t_end);
                set(&mut cfg.ode.dt, a.dt);
                set(&mut cfg.ode.record_every, a.record_every);
                cfg.ode.stochastic |= a.stochastic;
            }
            Command::Train(a) => {
                let t = &mut cfg.train;
                if let (Some(b), None) = (&a.backend, &common.config) {
                    // without a config file, a backend brings its calibrated settings
                    t.net = LstmConfig::calibrated(b, a.kappa.unwrap_or(0.0));
                }
                set(&mut t.net.backend, a.backend.clone());
                if let Some(k) = a.kappa {
                    t.net.spec.device.kappa = k;
                    if let Some(c) = &mut t.net.spec.device_c {
                        c.kappa = k;
                    }
                }
                set(&mut t.net.hidden, a.hidden);
                set(&mut t.net.spec.lr, a.lr);
                if a.tau.is_some() {
                    t.net.spec.tau = a.tau;
                }
                set(&mut t.run.epochs, a.epochs);
                set(&mut t.run.corpus, a.corpus.clone());
                set(&mut t.run.bptt_len, a.bptt);
                set(&mut t.seeds, a.seeds);
                set(&mut t.max_chars, a.max_chars);
            }
            Command::InitDemo(a) => {
                let d = &mut cfg.init_demo;
                set(&mut d.rows, a.rows);
                set(&mut d.cols, a.cols);
                set(&mut d.n_pulses, a.pulses);
                set(&mut d.device.kappa, a.kappa);
                set(&mut d.noise.sigma_d2d_wsym, a.wsym_sigma);
                set(&mut d.mode, a.mode);
                set(&mut d.checkpoints, a.checkpoints);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<FileEntry>,
    pub wall_time_s: f64,
}

pub fn file_entry(path: &Path) -> Result<FileEntry> {
    let data = std::fs::read(path).map_err(|source| Error::File { path: path.into(), source })?;
    Ok(FileEntry {
        name: path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        bytes: data.len() as u64,
        sha256: hex::encode(Sha256::digest(&data)),
    })
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::File { path: path.into(), source })?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one command; returns the manifest it wrote.
pub fn run(command: &Command) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = command.resolve()?;
    let seed = cfg.seed()?;
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&out).map_err(|source| Error::File { path: out.clone(), source })?;
    let files = match command {
        Command::ScalarSgd(_) => scalar_sgd(&cfg, seed, &out)?,
        Command::ScalarShd(_) => scalar_shd(&cfg, seed, &out)?,
        Command::SweepResidual(_) => sweep(&cfg, seed, &out)?,
        Command::Ode(_) => ode(&cfg, seed, &out)?,
        Command::Train(_) => train(&cfg, seed, &out)?,
        Command::InitDemo(_) => init_demo(&cfg, seed, &out)?,
    };
    let manifest = RunManifest {
        command: command.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        config: cfg,
        files: files.iter().map(|p| file_entry(p)).collect::<Result<_>>()?,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let path = out.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| Error::File { path, source })?;
    Ok(manifest)
}

fn scalar_sgd(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let traj = run_sgd_scalar(&cfg.problem, &cfg.sgd, &mut seeded(seed))?;
    let path = out.join("trajectory.csv");
    write_csv(&path, &["step", "g"], traj.step.iter().zip(&traj.g))?;
    Ok(vec![path])
}

fn scalar_shd(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let traj = run_shd_scalar(&cfg.problem, &cfg.shd, &mut seeded(seed))?;
    let a = traj.a.as_deref().unwrap_or_default();
    let path = out.join("trajectory.csv");
    write_csv(&path, &["step", "a", "c"], traj.step.iter().zip(a).zip(&traj.g).map(|((s, a), c)| (s, a, c)))?;
    Ok(vec![path])
}

fn sweep(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let spec = SweepSpec {
        algorithm: cfg.sweep.algorithm,
        g0_list: parse_grid(&cfg.sweep.g0_grid)?,
        seeds: cfg.sweep.seeds,
        master_seed: seed,
        problem: cfg.problem,
        sgd: cfg.sgd,
        shd: cfg.shd,
    };
    let rows = residual_sweep(&spec)?;
    let path = out.join("residuals.csv");
    write_csv(&path, &["g0", "seed", "residual"], rows.iter().map(|r| (r.g0, r.seed, r.residual)))?;
    Ok(vec![path])
}

fn ode(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let o = &cfg.ode;
    let grid = TimeGrid::new(o.t_end, o.dt).recording_every(o.record_every);
    let mut rng = seeded(seed);
    let rng = o.stochastic.then_some(&mut rng);
    let path = out.join("ode_trajectory.csv");
    match o.model {
        OdeModel::Shd => {
            let s = integrate_shd_ode(&o.params, (o.a0, o.c0), grid, rng)?;
            let rows = (0..s.t.len()).map(|k| (s.t[k], s.a[k], s.c[k], s.h[k]));
            write_csv(&path, &["t", "a", "c", "h"], rows)?;
        }
        OdeModel::Sgd => {
            let s = integrate_sgd_ode(&o.params, o.c0, grid, rng)?;
            write_csv(&path, &["t", "g"], s.t.iter().zip(&s.g))?;
        }
    }
    Ok(vec![path])
}

fn train(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let t = &cfg.train;
    if t.run.corpus.as_os_str().is_empty() {
        return Err(Error::Config("train needs a corpus (--corpus or [train.run] corpus)".into()));
    }
    if t.seeds == 0 {
        return Err(Error::Config("train needs seeds >= 1".into()));
    }
    let mut corpus = Corpus::from_path(&t.run.corpus, t.run.lowercase)?;
    if t.max_chars > 0 {
        corpus = corpus.truncated(t.max_chars);
    }
    let registry = BackendRegistry::with_defaults();
    if !registry.contains(&t.net.backend) {
        return Err(Error::UnknownBackend { name: t.net.backend.clone(), available: registry.names().join(", ") });
    }
    let curves: Vec<Vec<CurvePoint>> = (0..t.seeds)
        .into_par_iter()
        .map(|k| {
            let run = TrainRun { seed: if t.seeds == 1 { seed } else { mix(seed, k) }, ..t.run.clone() };
            train_lstm(&t.net, &corpus, &run, &registry)
        })
        .collect::<Result<_>>()?;
    let kappa = t.net.spec.device.kappa;
    let rows = curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.iter().map(move |p| (p.epoch, k, t.net.backend.as_str(), kappa, p.cross_entropy)));
    let path = out.join("learning_curve.csv");
    write_csv(&path, &["epoch", "seed", "backend", "kappa", "cross_entropy"], rows)?;
    Ok(vec![path])
}

fn init_demo(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let d = &cfg.init_demo;
    d.device.validate()?;
    d.noise.validate()?;
    if d.rows == 0 || d.cols == 0 || d.checkpoints == 0 {
        return Err(Error::Config("init-demo needs rows, cols and checkpoints >= 1".into()));
    }
    let mut rng = stream(seed, 0);
    let mut dev = DeviceArray::sampled(d.rows, d.cols, &d.device, &d.noise, &mut rng);
    let total = d.total_pulses();
    let offsets = |dev: &DeviceArray| -> (f64, f64) {
        let off: Vec<f64> = dev.w.iter().zip(&dev.w_sym).map(|(w, s)| (w - s).abs()).collect();
        (off.iter().sum::<f64>() / off.len() as f64, off.iter().fold(0.0, |m: f64, v| m.max(*v)))
    };
    let mut rows = vec![(0u64, offsets(&dev))];
    let mut done = 0;
    for k in 1..=d.checkpoints as u64 {
        let target = total * k / d.checkpoints as u64;
        // alternating pulses relax in up/down pairs; keep chunks even
        let chunk = (target - done) & !1;
        if chunk > 0 {
            relax_to_symmetry(&mut dev, chunk, d.mode, d.noise.sigma_c2c, &mut rng);
            done += chunk;
        }
        rows.push((done, offsets(&dev)));
    }
    rows.dedup_by_key(|r| r.0);
    let path = out.join("zero_shift.csv");
    write_csv(&path, &["pulses", "mean_abs_offset", "max_abs_offset"], rows.iter().map(|(p, (m, x))| (p, m, x)))?;
    Ok(vec![path])
}

/// Exit status for an error: 2 for configuration problems, 3 for numeric
/// aborts, 1 for I/O failures while writing results.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => 3,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        Error::Shape(_)
        | Error::InvalidParam(_)
        | Error::UnknownBackend { .. }
        | Error::Config(_)
        | Error::File { .. } => 2,
    }
}

fn thread_count() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Parses the process arguments, runs, and maps the outcome to an exit code.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = thread_count().and_then(|threads| match threads {
        None => run(&cli.command),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| run(&cli.command)),
    });
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("crosspoint").chain(args.iter().copied())).unwrap().command
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 4\n[problem]\ng0 = 0.1\nn_steps = 10\n[sgd.device]\nkappa = 0.2\n").unwrap();
        let cmd = parse(&["scalar-sgd", "--config", path.to_str().unwrap(), "--kappa", "0.5"]);
        let cfg = cmd.resolve().unwrap();
        assert_eq!((cfg.seed, cfg.problem.g0, cfg.problem.n_steps), (Some(4), 0.1, 10));
        assert_eq!(cfg.sgd.device.kappa, 0.5);
    }

    #[test]
    fn sweep_kappa_targets_the_chosen_algorithm() {
        let cfg =
            parse(&["sweep-residual", "--algo", "shd", "--kappa", "0.4", "--g0-grid", "-0.5:0.5:3"]).resolve().unwrap();
        assert_eq!(cfg.shd.device_a.kappa, 0.4);
        assert_eq!(cfg.sgd.device.kappa, 0.0);
        assert_eq!(cfg.sweep.g0_grid, "-0.5:0.5:3");
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 3);
        assert_eq!(exit_code(&Error::InvalidParam("x".into())), 2);
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let err = run(&parse(&["ode", "--t-end", "1"])).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }
}
