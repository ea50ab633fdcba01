//! Single-parameter linear regression on one crosspoint.
//!
//! Each step draws an input `x` and a noisy label `g₀·x + ν`, `ν ~ N(0, σ)`.
//! With `x = ±1` the per-sample gradient of `E = ½(w·x − label)²` is
//! `(w − g₀) + ε` with `ε = −ν·x`, a zero-mean fluctuation of size `σ`.
//!
//! The SGD tile has a zero reference, so its weight is the device
//! conductance itself and `w_sym` of the device template is the weight-space
//! symmetry point. The coupled-array runs target `C`.
//!
//! A run splits its generator into a data stream (inputs, labels) and a
//! device stream (pulses, read noise). Sweeps give every `g₀` of a seed the
//! same pair of streams, so differences between grid points are not masked
//! by sampling noise.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{PulseUpdateConfig, Tile, ZeroShiftMode};
use crate::device::{DeviceState, NoiseModel};
use crate::dynamics::{hamiltonian, OdeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{stream, SimRng};
use crate::stats::{batch_means_std_err, mean, std_err};
use crate::trainers::{make_shd_group, SgdTile, ShdGroupConfig, ShdMode, ShdTileGroup, WeightBackend};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleDist {
    /// `x = ±1` with equal probability.
    #[default]
    PlusMinusOne,
    /// `x ~ U(−1, 1)`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarProblem {
    pub g0: f64,
    pub noise_eps: f64,
    pub n_steps: u64,
    pub sample_dist: SampleDist,
}

impl Default for ScalarProblem {
    fn default() -> Self {
        Self { g0: 0.5, noise_eps: 1.0, n_steps: 200_000, sample_dist: SampleDist::PlusMinusOne }
    }
}

impl ScalarProblem {
    pub fn validate(&self) -> Result<()> {
        if self.noise_eps >= 0.0 && self.noise_eps.is_finite() && self.g0.is_finite() && self.n_steps > 0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid scalar problem {self:?}")))
        }
    }
}

struct DataStream {
    rng: SimRng,
    label_noise: Option<Normal<f64>>,
    dist: SampleDist,
}

impl DataStream {
    fn new(problem: &ScalarProblem, rng: SimRng) -> Self {
        let label_noise = (problem.noise_eps > 0.0).then(|| Normal::new(0.0, problem.noise_eps).expect("finite σ"));
        Self { rng, label_noise, dist: problem.sample_dist }
    }

    /// `(x, label noise ν)`.
    fn sample(&mut self) -> (f64, f64) {
        let x = match self.dist {
            SampleDist::PlusMinusOne => {
                if self.rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SampleDist::Uniform => self.rng.random_range(-1.0..1.0),
        };
        let nu = self.label_noise.as_ref().map_or(0.0, |n| n.sample(&mut self.rng));
        (x, nu)
    }
}

fn split_streams(rng: &mut SimRng) -> (SimRng, SimRng) {
    (SimRng::seed_from_u64(rng.random()), SimRng::seed_from_u64(rng.random()))
}

/// Expected per-step contributions at convergence, for the balance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalanceTerms {
    /// Mean of `−η·(w·x − label)·x`.
    pub gradient: f64,
    pub gradient_se: f64,
    /// Mean of `−η·κ·|(w·x − label)·x|·(w − w_sym)`.
    pub drift: f64,
    pub drift_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub step: Vec<u64>,
    /// Weight (SGD) or core value C (coupled arrays).
    pub g: Vec<f64>,
    /// Auxiliary value A (coupled arrays only).
    pub a: Option<Vec<f64>>,
    /// Mean of `g` over the final 5% of steps.
    pub g_final: f64,
    /// Mean of `A` over the final 5% of steps.
    pub a_final: Option<f64>,
    pub balance: Option<BalanceTerms>,
}

fn final_window_start(n_steps: u64) -> u64 {
    n_steps - (n_steps / 20).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdScalarConfig {
    pub device: DeviceState,
    pub noise: NoiseModel,
    pub update: PulseUpdateConfig,
    pub record_every: u64,
}

impl Default for SgdScalarConfig {
    fn default() -> Self {
        Self {
            device: DeviceState::default(),
            noise: NoiseModel::ideal(),
            update: PulseUpdateConfig::new(20, 1.0, 0.05),
            record_every: 100,
        }
    }
}

impl SgdScalarConfig {
    pub fn learning_rate(&self) -> f64 {
        self.update.learning_rate(self.device.dw0)
    }
}

/// SGD on a 1×1 tile initialized at the device's current conductance.
pub fn run_sgd_scalar(problem: &ScalarProblem, cfg: &SgdScalarConfig, rng: &mut SimRng) -> Result<Trajectory> {
    problem.validate()?;
    cfg.device.validate()?;
    let (data_rng, mut dev_rng) = split_streams(rng);
    let mut data = DataStream::new(problem, data_rng);
    let tile = Tile::new(
        crate::crossbar::DeviceArray::sampled(1, 1, &cfg.device, &cfg.noise, &mut dev_rng),
        vec![0.0],
        cfg.noise,
    )?;
    let w_sym = tile.main.w_sym[0];
    let kappa = tile.main.kappa[0];
    let eta = cfg.update.learning_rate(tile.main.dw0[0]);
    let mut sgd = SgdTile::new(tile, cfg.update)?;
    let record = cfg.record_every.max(1);
    let tail_start = final_window_start(problem.n_steps);
    let balance_start = problem.n_steps / 2;
    let (mut grad_terms, mut drift_terms) = (Vec::new(), Vec::new());
    let mut traj =
        Trajectory { step: vec![0], g: vec![sgd.tile.main.w[0]], a: None, g_final: 0.0, a_final: None, balance: None };
    let mut tail = Vec::new();
    for k in 0..problem.n_steps {
        let (x, nu) = data.sample();
        let w = sgd.tile.main.w[0];
        let y = sgd.forward(&[x], &mut dev_rng)?[0];
        let d = y - (problem.g0 * x + nu);
        if k >= balance_start {
            let grad = d * x;
            grad_terms.push(-eta * grad);
            drift_terms.push(-eta * kappa * grad.abs() * (w - w_sym));
        }
        sgd.update(&[x], &[d], &mut dev_rng)?;
        let w = sgd.tile.main.w[0];
        if k >= tail_start {
            tail.push(w);
        }
        if (k + 1) % record == 0 || k + 1 == problem.n_steps {
            traj.step.push(k + 1);
            traj.g.push(w);
        }
    }
    traj.g_final = mean(&tail);
    if !traj.g_final.is_finite() {
        return Err(Error::NonFinite("scalar SGD final weight".into()));
    }
    traj.balance = Some(BalanceTerms {
        gradient: mean(&grad_terms),
        gradient_se: batch_means_std_err(&grad_terms, 50),
        drift: mean(&drift_terms),
        drift_se: batch_means_std_err(&drift_terms, 50),
    });
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShdScalarConfig {
    pub device_a: DeviceState,
    pub device_c: DeviceState,
    pub noise: NoiseModel,
    pub cfg_a: PulseUpdateConfig,
    pub cfg_c: PulseUpdateConfig,
    pub tau: Option<u64>,
    pub mode: ShdMode,
    pub n_init_pulses: u64,
    pub record_every: u64,
}

impl Default for ShdScalarConfig {
    fn default() -> Self {
        Self {
            device_a: DeviceState::default(),
            device_c: DeviceState::default(),
            noise: NoiseModel::ideal(),
            cfg_a: PulseUpdateConfig::new(20, 1.0, 0.05),
            cfg_c: PulseUpdateConfig::new(5, 1.0, 0.05),
            tau: Some(1),
            mode: ShdMode::ThreeArray,
            n_init_pulses: 0,
            record_every: 100,
        }
    }
}

impl ShdScalarConfig {
    /// Continuum parameters matching this configuration: `η_A` per update and
    /// `η_C` per update (per-transfer rate spread over `τ` updates).
    pub fn ode_params(&self, problem: &ScalarProblem) -> OdeParams {
        let tau = self.tau.unwrap_or(u64::MAX) as f64;
        OdeParams {
            eta: self.cfg_a.learning_rate(self.device_a.dw0),
            eta_a: self.cfg_a.learning_rate(self.device_a.dw0),
            eta_c: self.cfg_c.learning_rate(self.device_c.dw0) / tau,
            kappa: self.device_a.kappa,
            kappa_a: self.device_a.kappa,
            kappa_c: self.device_c.kappa,
            g0: problem.g0,
            g_sym: self.device_a.w_sym,
            c_sym: self.device_c.w_sym,
            noise_eps: problem.noise_eps,
            ..OdeParams::default()
        }
    }

    fn group_config(&self) -> ShdGroupConfig {
        ShdGroupConfig {
            device_a: self.device_a,
            device_c: self.device_c,
            noise: self.noise,
            cfg_a: self.cfg_a,
            cfg_c: self.cfg_c,
            tau: self.tau,
            mode: self.mode,
            n_init_pulses: self.n_init_pulses,
            zero_shift: ZeroShiftMode::Alternating,
        }
    }
}

/// Coupled-array training of a 1×1 group from `A = C = 0`.
pub fn run_shd_scalar(problem: &ScalarProblem, cfg: &ShdScalarConfig, rng: &mut SimRng) -> Result<Trajectory> {
    problem.validate()?;
    let (data_rng, mut dev_rng) = split_streams(rng);
    let mut data = DataStream::new(problem, data_rng);
    let (mut group, _) = make_shd_group(1, 1, &cfg.group_config(), &mut dev_rng)?;
    let record = cfg.record_every.max(1);
    let tail_start = final_window_start(problem.n_steps);
    let read = |g: &ShdTileGroup| (g.a.main.w[0] - g.a.reference[0], g.c_main.w[0] - g.c_reference()[0]);
    let (a0, c0) = read(&group);
    let mut traj =
        Trajectory { step: vec![0], g: vec![c0], a: Some(vec![a0]), g_final: 0.0, a_final: None, balance: None };
    let (mut tail_a, mut tail_c) = (Vec::new(), Vec::new());
    for k in 0..problem.n_steps {
        let (x, nu) = data.sample();
        let y = group.forward(&[x], &mut dev_rng)?[0];
        let d = y - (problem.g0 * x + nu);
        group.shd_update(&[x], &[d], &mut dev_rng)?;
        let (a, c) = read(&group);
        if k >= tail_start {
            tail_a.push(a);
            tail_c.push(c);
        }
        if (k + 1) % record == 0 || k + 1 == problem.n_steps {
            traj.step.push(k + 1);
            traj.g.push(c);
            traj.a.as_mut().expect("coupled trajectory").push(a);
        }
    }
    traj.g_final = mean(&tail_c);
    traj.a_final = Some(mean(&tail_a));
    if !(traj.g_final.is_finite() && mean(&tail_a).is_finite()) {
        return Err(Error::NonFinite("scalar coupled-array final state".into()));
    }
    Ok(traj)
}

/// Hamiltonian of every recorded point of a coupled trajectory.
pub fn trajectory_hamiltonian(traj: &Trajectory, p: &OdeParams) -> Vec<f64> {
    let a = traj.a.as_ref().expect("coupled trajectory");
    a.iter().zip(&traj.g).map(|(a, c)| hamiltonian(*a, *c, p)).collect()
}

/// Orbit amplitude `√(2·mean H)` in each of `parts` consecutive segments.
pub fn orbit_amplitudes(h: &[f64], parts: usize) -> Vec<f64> {
    let len = h.len() / parts;
    (0..parts).map(|k| (2.0 * mean(&h[k * len..(k + 1) * len])).sqrt()).collect()
}

/// Window means of `H` across several runs, with standard errors computed
/// from the spread of per-run window means.
pub fn windowed_hamiltonian(hs: &[Vec<f64>], n_windows: usize) -> Vec<(f64, f64)> {
    let len = hs.iter().map(Vec::len).min().unwrap_or(0) / n_windows;
    (0..n_windows)
        .map(|k| {
            let per_run: Vec<f64> = hs.iter().map(|h| mean(&h[k * len..(k + 1) * len])).collect();
            (mean(&per_run), std_err(&per_run))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    Shd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algorithm::Sgd),
            "shd" => Ok(Algorithm::Shd),
            _ => Err(Error::Config(format!("unknown algorithm `{s}` (expected sgd or shd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub algorithm: Algorithm,
    pub g0_list: Vec<f64>,
    pub seeds: u64,
    pub master_seed: u64,
    pub problem: ScalarProblem,
    pub sgd: SgdScalarConfig,
    pub shd: ShdScalarConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub g0: f64,
    pub seed: u64,
    pub residual: f64,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// One run per `(g0, seed)`, rows ordered by `g0` then seed. Runs execute on
/// the current rayon pool; the output does not depend on the pool size.
pub fn residual_sweep(spec: &SweepSpec) -> Result<Vec<ResidualRow>> {
    let jobs: Vec<(f64, u64)> = spec.g0_list.iter().flat_map(|&g0| (0..spec.seeds).map(move |s| (g0, s))).collect();
    jobs.par_iter()
        .map(|&(g0, seed)| {
            let problem = ScalarProblem { g0, ..spec.problem };
            let mut rng = stream(spec.master_seed, seed);
            let traj = match spec.algorithm {
                Algorithm::Sgd => run_sgd_scalar(&problem, &spec.sgd, &mut rng)?,
                Algorithm::Shd => run_shd_scalar(&problem, &spec.shd, &mut rng)?,
            };
            Ok(ResidualRow { g0, seed, residual: (traj.g_final - g0).abs() })
        })
        .collect()
}

/// `(g0, mean residual, standard error)` per grid point, in grid order.
pub fn seed_averaged(rows: &[ResidualRow]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((g0, v)) if *g0 == r.g0 => v.push(r.residual),
            _ => out.push((r.g0, vec![r.residual])),
        }
    }
    out.into_iter().map(|(g0, v)| (g0, mean(&v), std_err(&v))).collect()
}

/// Mean of the first `n` recorded points across runs (a seed-averaged trajectory).
pub fn mean_trajectory(runs: &[Vec<f64>]) -> Vec<f64> {
    let n = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..n).map(|k| runs.iter().map(|r| r[k]).sum::<f64>() / runs.len() as f64).collect()
}

/// Weight read-out of a tile as a scalar, for 1×1 diagnostics.
pub fn scalar_weight(m: &Matrix) -> f64 {
    m.data[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate_sgd_ode, TimeGrid};
    use crate::rng::seeded;

    fn asym(kappa: f64) -> DeviceState {
        DeviceState::new(0.0, 0.001, kappa)
    }

    #[test]
    fn symmetric_sgd_converges() {
        let p = ScalarProblem { g0: 0.5, ..Default::default() };
        let t = run_sgd_scalar(&p, &SgdScalarConfig::default(), &mut seeded(1)).unwrap();
        assert!((t.g_final - 0.5).abs() < 0.02, "{}", t.g_final);
        assert_eq!(t.step.len(), t.g.len());
    }

    #[test]
    fn asymmetric_sgd_settles_between() {
        let p = ScalarProblem { g0: 0.5, ..Default::default() };
        let sym = run_sgd_scalar(&p, &SgdScalarConfig::default(), &mut seeded(1)).unwrap();
        let cfg = SgdScalarConfig { device: asym(0.5), ..Default::default() };
        let t = run_sgd_scalar(&p, &cfg, &mut seeded(1)).unwrap();
        assert!(t.g_final > 0.0 && t.g_final < 0.5, "{}", t.g_final);
        assert!((t.g_final - 0.5).abs() > (sym.g_final - 0.5).abs());
    }

    #[test]
    fn optimum_at_symmetry_point_is_stable_without_noise() {
        let p = ScalarProblem { g0: 0.0, noise_eps: 0.0, n_steps: 20_000, ..Default::default() };
        let cfg = SgdScalarConfig { device: asym(0.5), ..Default::default() };
        let t = run_sgd_scalar(&p, &cfg, &mut seeded(2)).unwrap();
        assert!(t.g.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn asymmetric_sgd_balances_gradient_and_drift() {
        let p = ScalarProblem { g0: 0.5, noise_eps: 2.0, ..Default::default() };
        let cfg = SgdScalarConfig { device: asym(0.5), ..Default::default() };
        let t = run_sgd_scalar(&p, &cfg, &mut seeded(3)).unwrap();
        let b = t.balance.unwrap();
        let se = (b.gradient_se.powi(2) + b.drift_se.powi(2)).sqrt();
        // w sits below g0, so the gradient pushes up and the drift pulls down
        assert!(b.gradient > 10.0 * b.gradient_se && b.drift < 0.0, "{b:?}");
        assert!((b.gradient + b.drift).abs() < 3.0 * se, "{b:?}");
    }

    #[test]
    fn asymmetric_sgd_matches_stochastic_ode() {
        let p = ScalarProblem { g0: 0.5, noise_eps: 2.0, ..Default::default() };
        let cfg = SgdScalarConfig { device: asym(0.5), ..Default::default() };
        let discrete: Vec<f64> = (0..4).map(|s| run_sgd_scalar(&p, &cfg, &mut stream(5, s)).unwrap().g_final).collect();
        let ode = OdeParams { eta: cfg.learning_rate(), kappa: 0.5, g0: 0.5, noise_eps: 2.0, ..Default::default() };
        let cont: Vec<f64> = (0..4)
            .map(|s| {
                let run = integrate_sgd_ode(&ode, 0.0, TimeGrid::new(200_000.0, 1.0), Some(&mut stream(6, s))).unwrap();
                mean(&run.g[190_000..])
            })
            .collect();
        assert!((mean(&discrete) - mean(&cont)).abs() < 0.03 * 2.0, "{discrete:?} vs {cont:?}");
    }

    #[test]
    fn shd_converges_with_asymmetric_auxiliary_array() {
        let p = ScalarProblem { g0: 0.5, noise_eps: 1.0, ..Default::default() };
        let cfg = ShdScalarConfig { device_a: asym(0.5), device_c: asym(0.5), ..Default::default() };
        let t = run_shd_scalar(&p, &cfg, &mut seeded(4)).unwrap();
        assert!((t.g_final - 0.5).abs() < 0.1, "{}", t.g_final);
        assert!(t.a_final.unwrap().abs() < 0.1);
    }

    #[test]
    fn zero_target_gives_flat_trajectories() {
        let p = ScalarProblem { g0: 0.0, noise_eps: 0.0, n_steps: 10_000, ..Default::default() };
        let t = run_shd_scalar(&p, &ShdScalarConfig::default(), &mut seeded(5)).unwrap();
        assert!(t.g.iter().chain(t.a.as_ref().unwrap()).all(|v| *v == 0.0));
    }

    #[test]
    fn sweep_rows_are_ordered_and_reproducible() {
        let spec = SweepSpec {
            algorithm: Algorithm::Sgd,
            g0_list: linspace(-0.4, 0.4, 3),
            seeds: 2,
            master_seed: 9,
            problem: ScalarProblem { n_steps: 2000, ..Default::default() },
            sgd: SgdScalarConfig::default(),
            shd: ShdScalarConfig::default(),
        };
        let a = residual_sweep(&spec).unwrap();
        let b = residual_sweep(&spec).unwrap();
        assert_eq!(a, b);
        let keys: Vec<(f64, u64)> = a.iter().map(|r| (r.g0, r.seed)).collect();
        assert_eq!(keys, vec![(-0.4, 0), (-0.4, 1), (0.0, 0), (0.0, 1), (0.4, 0), (0.4, 1)]);
        assert_eq!(seed_averaged(&a).len(), 3);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(-0.8, 0.8, 9);
        assert_eq!(v.len(), 9);
        assert!((v[0] + 0.8).abs() < 1e-15 && (v[8] - 0.8).abs() < 1e-15 && v[4].abs() < 1e-15);
    }
}
