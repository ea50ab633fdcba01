//! Conductance-modulation physics of a single crosspoint element.
//!
//! Device state is expressed directly in weight units. A pulse moves the
//! normalized conductance `w` by a step whose size depends linearly on the
//! distance from the device's symmetry point `w_sym` ("soft bounds"):
//!
//! ```text
//! up:   Δw = +dw0 · (1 − κ·(w − w_sym)) · (1 + ξ)
//! down: Δw = −dw0 · (1 + κ·(w − w_sym)) · (1 + ξ)
//! ```
//!
//! where `ξ` is the cycle-to-cycle fluctuation. The two magnitudes agree only
//! at `w = w_sym`. Averaged over an up and a down pulse the device moves by
//! `−dw0·κ·(w − w_sym)`, a drift toward the symmetry point that every update
//! event carries regardless of its intended direction. The step factors are
//! floored at zero, so far outside `|w − w_sym| < 1/κ` a pulse cannot move the
//! device backwards; the result is always clipped to `[w_min, w_max]`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Sign of a programming pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Direction::Up => 1.0,
            Direction::Down => -1.0,
        }
    }

    #[inline]
    pub fn from_sign(s: f64) -> Self {
        if s >= 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceState {
    pub w: f64,
    pub w_sym: f64,
    /// Step magnitude at the symmetry point.
    pub dw0: f64,
    /// Asymmetry factor κ in `[0, 1]`; zero is an ideal symmetric device.
    pub kappa: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for DeviceState {
    fn default() -> Self {
        Self { w: 0.0, w_sym: 0.0, dw0: 0.001, kappa: 0.0, w_min: -1.0, w_max: 1.0 }
    }
}

impl DeviceState {
    pub fn new(w_sym: f64, dw0: f64, kappa: f64) -> Self {
        Self { w: w_sym, w_sym, dw0, kappa, ..Self::default() }
    }

    pub fn with_w(mut self, w: f64) -> Self {
        self.w = w;
        self
    }

    pub fn range(&self) -> f64 {
        self.w_max - self.w_min
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dw0 > 0.0
            && self.dw0.is_finite()
            && (0.0..=1.0).contains(&self.kappa)
            && self.w_min < self.w_sym
            && self.w_sym < self.w_max
            && (self.w_min..=self.w_max).contains(&self.w);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid device state {self:?}")))
        }
    }

    /// Applies one programming pulse. With `sigma_c2c == 0` no random numbers
    /// are consumed.
    pub fn pulse(&self, dir: Direction, sigma_c2c: f64, rng: &mut SimRng) -> DeviceState {
        let c2c = c2c_factor(sigma_c2c, rng);
        let w = pulse_kernel(self.w, self.w_sym, self.dw0, self.kappa, self.w_min, self.w_max, dir.sign(), c2c);
        DeviceState { w, ..*self }
    }

    /// Mean signed displacement per pulse when up and down are equiprobable.
    /// Exact only inside `|w − w_sym| < 1/κ`, where neither step is floored.
    pub fn asymmetry_drift(&self) -> f64 {
        -self.dw0 * self.kappa * (self.w - self.w_sym)
    }

    /// Deterministic (noise-free) step sizes `(up, down)` at the current `w`.
    pub fn step_sizes(&self) -> (f64, f64) {
        let e = self.kappa * (self.w - self.w_sym);
        (self.dw0 * (1.0 - e).max(0.0), self.dw0 * (1.0 + e).max(0.0))
    }
}

/// The single pulse formula shared by scalar devices and device arrays.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn pulse_kernel(
    w: f64,
    w_sym: f64,
    dw0: f64,
    kappa: f64,
    w_min: f64,
    w_max: f64,
    dir: f64,
    c2c: f64,
) -> f64 {
    let factor = (1.0 - dir * kappa * (w - w_sym)).max(0.0);
    (w + dir * dw0 * factor * c2c).clamp(w_min, w_max)
}

/// Multiplicative cycle-to-cycle factor `1 + σ·z`, `z` a standard normal
/// truncated to `[-3, 3]` by resampling.
#[inline]
pub(crate) fn c2c_factor(sigma: f64, rng: &mut SimRng) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return (1.0 + sigma * z).max(0.0);
        }
    }
}

/// Device-to-device, cycle-to-cycle and read noise magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Relative spread of `dw0` across devices.
    pub sigma_d2d_dw0: f64,
    /// Absolute spread of `w_sym` across devices.
    pub sigma_d2d_wsym: f64,
    /// Relative per-pulse step fluctuation.
    pub sigma_c2c: f64,
    /// Additive Gaussian noise per analog output element.
    pub sigma_read: f64,
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.sigma_d2d_dw0, self.sigma_d2d_wsym, self.sigma_c2c, self.sigma_read];
        if fields.iter().all(|s| *s >= 0.0 && s.is_finite()) && self.sigma_c2c < 1.0 / 3.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("noise magnitudes must be finite and >= 0 (sigma_c2c < 1/3): {self:?}")))
        }
    }
}

/// Draws one device from `template` with device-to-device variation applied.
pub fn sample_device(template: &DeviceState, noise: &NoiseModel, rng: &mut SimRng) -> DeviceState {
    let mut d = *template;
    if noise.sigma_d2d_dw0 > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        d.dw0 = (template.dw0 * (1.0 + noise.sigma_d2d_dw0 * z)).max(DW0_FLOOR * template.dw0);
    }
    if noise.sigma_d2d_wsym > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        let margin = WSYM_MARGIN * template.range();
        d.w_sym = (template.w_sym + noise.sigma_d2d_wsym * z).clamp(template.w_min + margin, template.w_max - margin);
    }
    d
}

const DW0_FLOOR: f64 = 0.01;
const WSYM_MARGIN: f64 = 0.01;

/// A pulse sequence of `m + n` up pulses and `n` down pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseSequenceStats {
    pub m: u64,
    pub n: u64,
}

impl PulseSequenceStats {
    pub fn len(&self) -> u64 {
        self.m + 2 * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fraction of the sequence carrying persistent sign information, `m/(m+2n)`.
    pub fn persistence_ratio(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.m as f64 / self.len() as f64
        }
    }
}

/// Applies the pulses of `stats` in a uniformly random order.
pub fn random_pulse_relaxation(
    state: &DeviceState,
    stats: PulseSequenceStats,
    sigma_c2c: f64,
    rng: &mut SimRng,
) -> DeviceState {
    let mut ups = stats.m + stats.n;
    let mut remaining = stats.len();
    let mut s = *state;
    // Sequential sampling without replacement gives a uniform permutation.
    while remaining > 0 {
        let dir = if rng.random_range(0..remaining) < ups {
            ups -= 1;
            Direction::Up
        } else {
            Direction::Down
        };
        s = s.pulse(dir, sigma_c2c, rng);
        remaining -= 1;
    }
    s
}
