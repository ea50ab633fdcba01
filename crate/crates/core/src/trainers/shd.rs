//! Coupled auxiliary/core arrays.
//!
//! Forward and backward passes read `C`; every gradient update goes to `A`.
//! Every `τ` updates one column `j` of `A` is read through a one-hot input
//! `u = e_j` (`v = A·u`) and `(u, v)` is applied to `C_main` as a parallel
//! update with ascent sign, so `E[ΔC] = +η_C·A` column by column. The column
//! cursor advances cyclically. `A` is never reset or written other than by
//! gradient updates.
//!
//! In three-array mode `C` reads against `A`'s reference, which holds the
//! symmetry points of `A_main`; in four-array mode `C` has its own reference.

use serde::{Deserialize, Serialize};

use crate::crossbar::{
    analog_backward, analog_forward, pulse_update, DeviceArray, PulseUpdateConfig, Tile, TileSnapshot, UpdateSign,
    UpdateStats, ZeroShiftMode, ZeroShiftReport,
};
use crate::device::{DeviceState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng::SimRng;

use super::{BackendSpec, Management, WeightBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ShdMode {
    #[default]
    #[serde(rename = "3-array")]
    ThreeArray,
    #[serde(rename = "4-array")]
    FourArray,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShdTileGroup {
    /// `A_main` and `A_ref`.
    pub a: Tile,
    pub c_main: DeviceArray,
    /// Absent in three-array mode.
    pub c_ref: Option<Vec<f64>>,
    pub cfg_a: PulseUpdateConfig,
    pub cfg_c: PulseUpdateConfig,
    /// Updates between transfers; `None` never transfers.
    pub tau: Option<u64>,
    pub transfer_index: usize,
    pub step_counter: u64,
    pub management: Management,
}

/// Construction parameters of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct ShdGroupConfig {
    pub device_a: DeviceState,
    pub device_c: DeviceState,
    pub noise: NoiseModel,
    pub cfg_a: PulseUpdateConfig,
    pub cfg_c: PulseUpdateConfig,
    pub tau: Option<u64>,
    pub mode: ShdMode,
    pub n_init_pulses: u64,
    pub zero_shift: ZeroShiftMode,
}

/// Samples A and C devices, zero-shifts `A_main` (and `C_main` in four-array
/// mode) and programs the arrays so that both `A` and `C` read zero. In
/// three-array mode `C_main` is programmed to `A_ref`.
pub fn make_shd_group(
    rows: usize,
    cols: usize,
    cfg: &ShdGroupConfig,
    rng: &mut SimRng,
) -> Result<(ShdTileGroup, ZeroShiftReport)> {
    cfg.cfg_a.validate()?;
    cfg.cfg_c.validate()?;
    cfg.noise.validate()?;
    if cfg.tau == Some(0) {
        return Err(Error::InvalidParam("tau must be >= 1".into()));
    }
    let mut a = Tile::sampled(rows, cols, &cfg.device_a, cfg.noise, rng);
    let mut report = a.zero_shift_init(cfg.n_init_pulses, cfg.zero_shift, rng);
    let mut c = Tile::sampled(rows, cols, &cfg.device_c, cfg.noise, rng);
    let c_ref = match cfg.mode {
        ShdMode::ThreeArray => {
            c.main.program(&a.reference)?;
            None
        }
        ShdMode::FourArray => {
            let r = c.zero_shift_init(cfg.n_init_pulses, cfg.zero_shift, rng);
            report.symmetric_devices += r.symmetric_devices;
            Some(c.reference)
        }
    };
    let group = ShdTileGroup {
        a,
        c_main: c.main,
        c_ref,
        cfg_a: cfg.cfg_a,
        cfg_c: cfg.cfg_c,
        tau: cfg.tau,
        transfer_index: 0,
        step_counter: 0,
        management: Management::default(),
    };
    Ok((group, report))
}

impl ShdTileGroup {
    pub fn from_spec(rows: usize, cols: usize, spec: &BackendSpec, mode: ShdMode, rng: &mut SimRng) -> Result<Self> {
        spec.validate()?;
        let cfg = ShdGroupConfig {
            device_a: spec.device,
            device_c: spec.device_c.unwrap_or(spec.device),
            noise: spec.noise,
            cfg_a: spec.update_config(),
            cfg_c: spec.transfer_config(),
            tau: spec.tau,
            mode,
            n_init_pulses: spec.n_init_pulses,
            zero_shift: spec.zero_shift,
        };
        let (mut g, _) = make_shd_group(rows, cols, &cfg, rng)?;
        g.management = spec.management;
        Ok(g)
    }

    pub fn mode(&self) -> ShdMode {
        if self.c_ref.is_some() {
            ShdMode::FourArray
        } else {
            ShdMode::ThreeArray
        }
    }

    pub fn c_reference(&self) -> &[f64] {
        self.c_ref.as_deref().unwrap_or(&self.a.reference)
    }

    pub fn a_weights(&self) -> Matrix {
        self.a.read_weights()
    }

    pub fn c_weights(&self) -> Matrix {
        Matrix {
            rows: self.c_main.rows,
            cols: self.c_main.cols,
            data: self.c_main.w.iter().zip(self.c_reference()).map(|(w, r)| w - r).collect(),
        }
    }

    /// Number of columns cycled through by the transfer schedule.
    pub fn transfer_dim(&self) -> usize {
        self.c_main.cols
    }

    /// Gradient update on `A`; fires a transfer when the step counter reaches `τ`.
    pub fn shd_update(&mut self, x: &[f64], d: &[f64], rng: &mut SimRng) -> Result<UpdateStats> {
        let cfg = self.management.update_config(&self.cfg_a, x, d);
        let mut stats = self.a.stochastic_update(x, d, &cfg, UpdateSign::Descent, rng)?;
        self.step_counter += 1;
        if let Some(tau) = self.tau {
            if self.step_counter >= tau {
                self.step_counter = 0;
                let t = self.transfer(rng)?;
                stats.pulses += t.pulses;
                stats.clipped += t.clipped;
            }
        }
        Ok(stats)
    }

    /// Reads column `transfer_index` of `A` and adds it to `C` with rate `η_C`.
    pub fn transfer(&mut self, rng: &mut SimRng) -> Result<UpdateStats> {
        let (rows, cols) = (self.a.rows(), self.a.cols());
        let j = self.transfer_index;
        let mut u = vec![0.0; cols];
        u[j] = 1.0;
        let v = analog_forward(&self.a.main, &self.a.reference, &u, self.a.noise.sigma_read, rng)?;
        debug_assert_eq!(v.len(), rows);
        self.transfer_index = (j + 1) % cols;
        pulse_update(&mut self.c_main, &u, &v, &self.cfg_c, UpdateSign::Ascent, self.a.noise.sigma_c2c, rng, None)
    }

    pub fn to_snapshot(&self) -> ShdGroupSnapshot {
        let c = Tile { main: self.c_main.clone(), reference: self.c_reference().to_vec(), noise: self.a.noise };
        ShdGroupSnapshot {
            mode: self.mode(),
            a: self.a.to_snapshot(),
            c: c.to_snapshot(),
            cfg_a: self.cfg_a,
            cfg_c: self.cfg_c,
            tau: self.tau,
            transfer_index: self.transfer_index,
            step_counter: self.step_counter,
        }
    }

    pub fn from_snapshot(s: &ShdGroupSnapshot) -> Result<Self> {
        let a = Tile::from_snapshot(&s.a)?;
        let c = Tile::from_snapshot(&s.c)?;
        if (a.rows(), a.cols()) != (c.rows(), c.cols()) {
            return Err(Error::Shape("A and C snapshots differ in shape".into()));
        }
        if s.transfer_index >= a.cols() {
            return Err(Error::InvalidParam("transfer_index out of range".into()));
        }
        let c_ref = match s.mode {
            ShdMode::ThreeArray => None,
            ShdMode::FourArray => Some(c.reference),
        };
        Ok(Self {
            a,
            c_main: c.main,
            c_ref,
            cfg_a: s.cfg_a,
            cfg_c: s.cfg_c,
            tau: s.tau,
            transfer_index: s.transfer_index,
            step_counter: s.step_counter,
            management: Management::default(),
        })
    }
}

/// JSON persistence format of a group. In three-array mode the C snapshot's
/// `ref` repeats A's reference and is ignored on restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShdGroupSnapshot {
    pub mode: ShdMode,
    pub a: TileSnapshot,
    pub c: TileSnapshot,
    pub cfg_a: PulseUpdateConfig,
    pub cfg_c: PulseUpdateConfig,
    pub tau: Option<u64>,
    pub transfer_index: usize,
    pub step_counter: u64,
}

impl WeightBackend for ShdTileGroup {
    fn name(&self) -> &'static str {
        match self.mode() {
            ShdMode::ThreeArray => "analog-shd",
            ShdMode::FourArray => "analog-shd4",
        }
    }

    fn rows(&self) -> usize {
        self.c_main.rows
    }

    fn cols(&self) -> usize {
        self.c_main.cols
    }

    fn forward(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let sigma = self.a.noise.sigma_read;
        self.management.scaled_product(x, |v| analog_forward(&self.c_main, self.c_reference(), v, sigma, rng))
    }

    fn backward(&self, d: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        let sigma = self.a.noise.sigma_read;
        self.management.scaled_product(d, |v| analog_backward(&self.c_main, self.c_reference(), v, sigma, rng))
    }

    fn update(&mut self, x: &[f64], d: &[f64], rng: &mut SimRng) -> Result<UpdateStats> {
        self.shd_update(x, d, rng)
    }

    fn read_weights(&self) -> Matrix {
        self.c_weights()
    }

    fn program_weights(&mut self, w: &Matrix) -> Result<()> {
        check_len("programmed weights", self.c_main.len(), w.data.len())?;
        let target: Vec<f64> = w.data.iter().zip(self.c_reference()).map(|(v, r)| v + r).collect();
        self.c_main.program(&target)
    }

    fn array_count(&self) -> usize {
        match self.mode() {
            ShdMode::ThreeArray => 3,
            ShdMode::FourArray => 4,
        }
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "backend": self.name(), "group": self.to_snapshot() })
    }
}
