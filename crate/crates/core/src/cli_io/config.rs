use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crossbar::ZeroShiftMode;
use crate::device::{DeviceState, NoiseModel};
use crate::dynamics::OdeParams;
use crate::error::{Error, Result};
use crate::networks::{LstmConfig, TrainRun};
use crate::scalar::{linspace, Algorithm, ScalarProblem, SgdScalarConfig, ShdScalarConfig};

/// Everything one invocation needs. Loaded from TOML (unknown keys are
/// errors), then overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory; there is no clock-derived default.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub problem: ScalarProblem,
    pub sgd: SgdScalarConfig,
    pub shd: ShdScalarConfig,
    pub sweep: SweepSection,
    pub ode: OdeSection,
    pub train: TrainSection,
    pub init_demo: InitDemoSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.into(), source })?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (--seed or `seed = …`)".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub algorithm: Algorithm,
    /// `lo:hi:n`, inclusive.
    pub g0_grid: String,
    pub seeds: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { algorithm: Algorithm::Sgd, g0_grid: "-0.8:0.8:9".into(), seeds: 20 }
    }
}

/// Parses `lo:hi:n` into `n` evenly spaced points.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("grid `{s}` is not of the form lo:hi:n"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let (lo, hi): (f64, f64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OdeModel {
    /// Coupled `(A, C)` equations, recorded with the Hamiltonian.
    #[default]
    Shd,
    /// Single-weight asymmetric SGD equation.
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSection {
    pub model: OdeModel,
    pub params: OdeParams,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub a0: f64,
    pub c0: f64,
    /// Integrate the noisy equations (`ε` redrawn per unit time).
    pub stochastic: bool,
}

impl Default for OdeSection {
    fn default() -> Self {
        Self {
            model: OdeModel::Shd,
            params: OdeParams::default(),
            t_end: 200_000.0,
            dt: 1.0,
            record_every: 100,
            a0: 0.0,
            c0: 0.0,
            stochastic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub net: LstmConfig,
    pub run: TrainRun,
    /// Independent runs, seeded `hash(seed, index)`.
    pub seeds: u64,
    /// Keep only the first `max_chars` characters of the corpus (0 keeps all).
    pub max_chars: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { net: LstmConfig::default(), run: TrainRun::default(), seeds: 1, max_chars: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitDemoSection {
    pub rows: usize,
    pub cols: usize,
    pub device: DeviceState,
    pub noise: NoiseModel,
    /// Total pulses per device; 0 means `20·range/dw0`.
    pub n_pulses: u64,
    /// Rows written to zero_shift.csv.
    pub checkpoints: usize,
    pub mode: ZeroShiftMode,
}

impl Default for InitDemoSection {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            device: DeviceState { kappa: 0.5, w: 0.6, ..DeviceState::default() },
            noise: NoiseModel { sigma_d2d_wsym: 0.05, ..NoiseModel::ideal() },
            n_pulses: 0,
            checkpoints: 20,
            mode: ZeroShiftMode::Alternating,
        }
    }
}

impl InitDemoSection {
    pub fn total_pulses(&self) -> u64 {
        if self.n_pulses > 0 {
            self.n_pulses
        } else {
            (20.0 * self.device.range() / self.device.dw0).round() as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("-0.8:0.8:3").unwrap(), vec![-0.8, 0.0, 0.8]);
        assert_eq!(parse_grid("0.5:9:1").unwrap(), vec![0.5]);
        for bad in ["1:2", "a:1:2", "0:1:0", "0:1:2:3", "0:inf:2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn toml_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig::from_toml("seed = 3\n[problem]\ng0 = 0.25\n[sgd.device]\nkappa = 0.5\n").unwrap();
        assert_eq!(cfg.seed().unwrap(), 3);
        assert_eq!(cfg.problem.g0, 0.25);
        assert_eq!(cfg.sgd.device.kappa, 0.5);
        assert_eq!(cfg.sgd.device.dw0, DeviceState::default().dw0);
        let echo = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&echo).unwrap(), cfg);

        let err = ExperimentConfig::from_toml("seed = 1\n[problem]\ngzero = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(ExperimentConfig::default().seed().is_err());
    }
}
