//! Training backends behind a common weight-block interface.
//!
//! A [`WeightBackend`] owns one weight matrix and provides the three
//! primitives of backpropagation training: a forward product, a backward
//! (transposed) product, and a rank-one update from `(x, δ)`. Networks are
//! written against the trait only; the concrete physics is picked at runtime
//! by name from a [`BackendRegistry`]:
//!
//! | name          | weights                                           |
//! |---------------|---------------------------------------------------|
//! | `digital-fp`  | floating-point matrix, exact SGD                  |
//! | `analog-sgd`  | one main/reference tile, pulse updates             |
//! | `analog-shd`  | coupled A/C arrays sharing A's reference (3 arrays) |
//! | `analog-shd4` | coupled A/C arrays with separate references (4)    |

mod digital;
mod sgd;
mod shd;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use digital::DigitalBackend;
pub use sgd::SgdTile;
pub use shd::{make_shd_group, ShdGroupConfig, ShdGroupSnapshot, ShdMode, ShdTileGroup};

use crate::crossbar::{PulseUpdateConfig, UpdateStats, ZeroShiftMode};
use crate::device::{DeviceState, NoiseModel};
use crate::error::{Error, Result};
use crate::matrix::{max_abs, Matrix};
use crate::rng::SimRng;

/// One trainable weight block `W` of shape `rows × cols`.
pub trait WeightBackend: Send {
    fn name(&self) -> &'static str;
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `W·x`, possibly noisy.
    fn forward(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
    /// `Wᵀ·d`, possibly noisy.
    fn backward(&self, d: &[f64], rng: &mut SimRng) -> Result<Vec<f64>>;
    /// Descent step along `−d·xᵀ`.
    fn update(&mut self, x: &[f64], d: &[f64], rng: &mut SimRng) -> Result<UpdateStats>;
    /// Exact weights used for inference. Diagnostic for analog backends.
    fn read_weights(&self) -> Matrix;
    /// Sets the inference weights directly (initialization only).
    fn program_weights(&mut self, w: &Matrix) -> Result<()>;
    /// Number of physical device/reference arrays (0 for digital).
    fn array_count(&self) -> usize;
    fn snapshot(&self) -> serde_json::Value;
}

/// Peripheral scaling applied around the analog primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Management {
    /// Normalize input vectors by their max-abs before an analog product and
    /// rescale the result, making read noise relative to the signal.
    pub noise: bool,
    /// Rebalance `amp_x`/`amp_d` per update so both pulse trains peak at the
    /// same probability while `amp_x·amp_d` (the learning rate) is unchanged.
    pub update: bool,
}

impl Management {
    pub fn both() -> Self {
        Self { noise: true, update: true }
    }

    pub(crate) fn scaled_product(&self, v: &[f64], f: impl FnOnce(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let m = max_abs(v);
        if !self.noise || m == 0.0 {
            return f(v);
        }
        let scaled: Vec<f64> = v.iter().map(|x| x / m).collect();
        Ok(f(&scaled)?.into_iter().map(|y| y * m).collect())
    }

    pub(crate) fn update_config(&self, cfg: &PulseUpdateConfig, x: &[f64], d: &[f64]) -> PulseUpdateConfig {
        if !self.update {
            return *cfg;
        }
        let (xm, dm) = (max_abs(x), max_abs(d));
        if xm == 0.0 || dm == 0.0 {
            return *cfg;
        }
        let prod = cfg.amp_x * cfg.amp_d;
        let amp_x = (prod * dm / xm).sqrt();
        PulseUpdateConfig { bl: cfg.bl, amp_x, amp_d: prod / amp_x }
    }
}

/// Backend-independent construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSpec {
    pub device: DeviceState,
    /// Devices of the C arrays; defaults to `device`.
    pub device_c: Option<DeviceState>,
    pub noise: NoiseModel,
    /// Per-update learning rate (η for SGD, η_A for SHD).
    pub lr: f64,
    /// η_C / η_A.
    pub lr_c_ratio: f64,
    pub bl: u32,
    pub bl_c: u32,
    /// Updates between transfers; `None` disables transfer.
    pub tau: Option<u64>,
    pub n_init_pulses: u64,
    pub zero_shift: ZeroShiftMode,
    pub management: Management,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            device: DeviceState::default(),
            device_c: None,
            noise: NoiseModel::ideal(),
            lr: 0.01,
            lr_c_ratio: 0.05,
            bl: 10,
            bl_c: 10,
            tau: Some(1),
            n_init_pulses: 0,
            zero_shift: ZeroShiftMode::Alternating,
            management: Management::default(),
        }
    }
}

impl BackendSpec {
    pub fn update_config(&self) -> PulseUpdateConfig {
        PulseUpdateConfig::for_learning_rate(self.lr, self.device.dw0, self.bl, 1.0)
    }

    pub fn transfer_config(&self) -> PulseUpdateConfig {
        let dw0 = self.device_c.unwrap_or(self.device).dw0;
        PulseUpdateConfig::for_learning_rate(self.lr * self.lr_c_ratio, dw0, self.bl_c, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        if let Some(c) = &self.device_c {
            c.validate()?;
        }
        self.noise.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite() && self.lr_c_ratio > 0.0) {
            return Err(Error::InvalidParam("learning rates must be positive".into()));
        }
        if self.tau == Some(0) {
            return Err(Error::InvalidParam("tau must be >= 1".into()));
        }
        self.update_config().validate()?;
        self.transfer_config().validate()
    }
}

/// Builds a backend of one kind for a given shape.
pub trait BackendFactory: Send + Sync {
    fn build(&self, rows: usize, cols: usize, spec: &BackendSpec, rng: &mut SimRng) -> Result<Box<dyn WeightBackend>>;
}

impl<F> BackendFactory for F
where
    F: Fn(usize, usize, &BackendSpec, &mut SimRng) -> Result<Box<dyn WeightBackend>> + Send + Sync,
{
    fn build(&self, rows: usize, cols: usize, spec: &BackendSpec, rng: &mut SimRng) -> Result<Box<dyn WeightBackend>> {
        self(rows, cols, spec, rng)
    }
}

/// Name → factory table.
pub struct BackendRegistry {
    factories: BTreeMap<String, Box<dyn BackendFactory>>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("digital-fp", |rows, cols, spec: &BackendSpec, _rng: &mut SimRng| {
            Ok(Box::new(DigitalBackend::new(Matrix::zeros(rows, cols), spec.lr)?) as Box<dyn WeightBackend>)
        });
        r.register("analog-sgd", |rows, cols, spec: &BackendSpec, rng: &mut SimRng| {
            Ok(Box::new(SgdTile::from_spec(rows, cols, spec, rng)?) as Box<dyn WeightBackend>)
        });
        r.register("analog-shd", |rows, cols, spec: &BackendSpec, rng: &mut SimRng| {
            Ok(Box::new(ShdTileGroup::from_spec(rows, cols, spec, ShdMode::ThreeArray, rng)?) as Box<dyn WeightBackend>)
        });
        r.register("analog-shd4", |rows, cols, spec: &BackendSpec, rng: &mut SimRng| {
            Ok(Box::new(ShdTileGroup::from_spec(rows, cols, spec, ShdMode::FourArray, rng)?) as Box<dyn WeightBackend>)
        });
        r
    }

    pub fn register(&mut self, name: &str, factory: impl BackendFactory + 'static) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(
        &self,
        name: &str,
        rows: usize,
        cols: usize,
        spec: &BackendSpec,
        rng: &mut SimRng,
    ) -> Result<Box<dyn WeightBackend>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownBackend { name: name.to_string(), available: self.names().join(", ") })?;
        f.build(rows, cols, spec, rng)
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
