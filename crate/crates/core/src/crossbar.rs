//! Tile-level analog operations.
//!
//! A [`Tile`] pairs an array of devices (`main`) with a fixed reference array;
//! the effective weight is `W[i][j] = main[i][j].w − ref[i][j]`. Forward and
//! backward passes are matrix-vector products against `W` with additive read
//! noise per output element. Updates use the pulse-coincidence scheme: for
//! each of `bl` time slots every column fires with probability
//! `min(1, amp_x·|x_j|)` and every row with probability `min(1, amp_d·|d_i|)`;
//! a crosspoint receives one pulse whenever its row and column fire in the
//! same slot. Signs travel on pulse polarity. The outer product `x·dᵀ` is
//! never formed; only the per-slot row and column firing sets are.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::device::{c2c_factor, pulse_kernel, sample_device, DeviceState, NoiseModel};
use crate::error::{check_len, Error, Result};
use crate::matrix::{diff_dot, Matrix};
use crate::rng::SimRng;

/// Devices of one physical array, stored column-of-fields (row-major per field).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceArray {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub w_sym: Vec<f64>,
    pub dw0: Vec<f64>,
    pub kappa: Vec<f64>,
    pub w_min: f64,
    pub w_max: f64,
}

impl DeviceArray {
    pub fn uniform(rows: usize, cols: usize, template: &DeviceState) -> Self {
        let n = rows * cols;
        Self {
            rows,
            cols,
            w: vec![template.w; n],
            w_sym: vec![template.w_sym; n],
            dw0: vec![template.dw0; n],
            kappa: vec![template.kappa; n],
            w_min: template.w_min,
            w_max: template.w_max,
        }
    }

    /// Array of devices drawn with device-to-device variation, in row-major order.
    pub fn sampled(rows: usize, cols: usize, template: &DeviceState, noise: &NoiseModel, rng: &mut SimRng) -> Self {
        let mut arr = Self::uniform(rows, cols, template);
        for k in 0..rows * cols {
            let d = sample_device(template, noise, rng);
            arr.dw0[k] = d.dw0;
            arr.w_sym[k] = d.w_sym;
        }
        arr
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn device(&self, i: usize, j: usize) -> DeviceState {
        let k = i * self.cols + j;
        DeviceState {
            w: self.w[k],
            w_sym: self.w_sym[k],
            dw0: self.dw0[k],
            kappa: self.kappa[k],
            w_min: self.w_min,
            w_max: self.w_max,
        }
    }

    pub fn set_device(&mut self, i: usize, j: usize, d: &DeviceState) {
        let k = i * self.cols + j;
        self.w[k] = d.w.clamp(self.w_min, self.w_max);
        self.w_sym[k] = d.w_sym;
        self.dw0[k] = d.dw0;
        self.kappa[k] = d.kappa;
    }

    #[inline]
    pub(crate) fn pulse(&mut self, k: usize, dir: f64, sigma_c2c: f64, rng: &mut SimRng) {
        let c2c = c2c_factor(sigma_c2c, rng);
        self.w[k] =
            pulse_kernel(self.w[k], self.w_sym[k], self.dw0[k], self.kappa[k], self.w_min, self.w_max, dir, c2c);
    }

    pub fn min_kappa(&self) -> f64 {
        self.kappa.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_dw0(&self) -> f64 {
        self.dw0.iter().sum::<f64>() / self.dw0.len().max(1) as f64
    }

    /// Direct write of conductances (initial programming, not a training op).
    pub fn program(&mut self, values: &[f64]) -> Result<()> {
        check_len("programmed values", self.len(), values.len())?;
        for (w, v) in self.w.iter_mut().zip(values) {
            *w = v.clamp(self.w_min, self.w_max);
        }
        Ok(())
    }
}

/// Bit length and probability scalings of the stochastic pulse trains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseUpdateConfig {
    pub bl: u32,
    pub amp_x: f64,
    pub amp_d: f64,
}

impl PulseUpdateConfig {
    pub fn new(bl: u32, amp_x: f64, amp_d: f64) -> Self {
        Self { bl, amp_x, amp_d }
    }

    /// Configuration with `amp_d` chosen so that `bl·amp_x·amp_d·dw0 = lr`.
    pub fn for_learning_rate(lr: f64, dw0: f64, bl: u32, amp_x: f64) -> Self {
        Self { bl, amp_x, amp_d: lr / (bl as f64 * amp_x * dw0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bl >= 1 && self.amp_x > 0.0 && self.amp_d > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("bl >= 1 and amplitudes > 0 required: {self:?}")))
        }
    }

    /// Expected weight change per unit `x·d` for unclipped probabilities.
    pub fn learning_rate(&self, dw0: f64) -> f64 {
        self.bl as f64 * self.amp_x * self.amp_d * dw0
    }
}

/// Whether an update follows `−x·dᵀ` (gradient descent) or `+x·dᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateSign {
    Descent,
    Ascent,
}

impl UpdateSign {
    fn factor(self) -> f64 {
        match self {
            UpdateSign::Descent => 1.0,
            UpdateSign::Ascent => -1.0,
        }
    }
}

/// Rows and columns that fired in one time slot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotFiring {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Bookkeeping returned by a stochastic update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UpdateStats {
    pub pulses: u64,
    /// Entries whose firing probability saturated at 1; each biases the update.
    pub clipped: u64,
}

/// Firing probabilities and pulse signs for one stochastic update.
#[derive(Debug, Clone)]
pub struct PulseTrains {
    pub p_cols: Vec<f64>,
    pub q_rows: Vec<f64>,
    pub sign_cols: Vec<f64>,
    pub sign_rows: Vec<f64>,
    pub clipped: u64,
}

impl PulseTrains {
    pub fn encode(x: &[f64], d: &[f64], cfg: &PulseUpdateConfig) -> Self {
        let mut clipped = 0;
        let mut prob = |v: f64, amp: f64| {
            let p = amp * v.abs();
            if p > 1.0 {
                clipped += 1;
                1.0
            } else {
                p
            }
        };
        let p_cols = x.iter().map(|&v| prob(v, cfg.amp_x)).collect();
        let q_rows = d.iter().map(|&v| prob(v, cfg.amp_d)).collect();
        let sgn = |v: &f64| if *v < 0.0 { -1.0 } else { 1.0 };
        Self { p_cols, q_rows, sign_cols: x.iter().map(sgn).collect(), sign_rows: d.iter().map(sgn).collect(), clipped }
    }

    /// Firing masks for `slots ≤ 64` consecutive slots: bit `s` of a line's
    /// mask is set when the line fires in slot `s`, independently per slot.
    /// Lines with probability 0 or 1 draw nothing; rows are drawn only if some
    /// column fired. Randomness comes from a Xoshiro256++ stream seeded by one
    /// draw from `rng`, so the result is a deterministic function of `rng`.
    pub fn sample_masks(&self, slots: u32, rng: &mut SimRng) -> (Vec<u64>, Vec<u64>) {
        debug_assert!((1..=64).contains(&slots));
        let mut fast = Xoshiro256PlusPlus::seed_from_u64(rng.next_u64());
        let cols: Vec<u64> = self.p_cols.iter().map(|&p| bernoulli_mask(p, slots, &mut fast)).collect();
        if cols.iter().all(|&m| m == 0) {
            return (vec![0; self.q_rows.len()], cols);
        }
        let rows = self.q_rows.iter().map(|&q| bernoulli_mask(q, slots, &mut fast)).collect();
        (rows, cols)
    }
}

fn unit(r: u64) -> f64 {
    (r >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` iid Bernoulli(p) bits, drawn as a Binomial count placed on a uniform
/// random subset of the `n` positions.
fn bernoulli_mask(p: f64, n: u32, rng: &mut Xoshiro256PlusPlus) -> u64 {
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    if p >= 1.0 {
        return full;
    }
    if p <= 0.0 {
        return 0;
    }
    let k = if p > 0.5 { n - binomial(n, 1.0 - p, rng) } else { binomial(n, p, rng) };
    if 2 * k > n {
        full & !random_subset(n - k, n, rng)
    } else {
        random_subset(k, n, rng)
    }
}

/// Inverse-transform Binomial(n, p) for `p ≤ 1/2`; `(1 − p)ⁿ ≥ 2⁻⁶⁴`.
fn binomial(n: u32, p: f64, rng: &mut Xoshiro256PlusPlus) -> u32 {
    let u = unit(rng.next_u64());
    let ratio = p / (1.0 - p);
    let mut f = (1.0 - p).powi(n as i32);
    let mut cdf = f;
    let mut k = 0;
    while u >= cdf && k < n {
        f *= ratio * f64::from(n - k) / f64::from(k + 1);
        k += 1;
        cdf += f;
    }
    k
}

/// Uniform `k`-subset of `0..n` as a bitmask, `2k ≤ n`.
fn random_subset(k: u32, n: u32, rng: &mut Xoshiro256PlusPlus) -> u64 {
    let mut m = 0u64;
    let mut placed = 0;
    while placed < k {
        let pos = ((rng.next_u64() >> 32) * u64::from(n)) >> 32;
        if m >> pos & 1 == 0 {
            m |= 1 << pos;
            placed += 1;
        }
    }
    m
}

/// Applies one pulse at every coincidence of a slot's firing sets.
pub fn apply_coincidences(
    dev: &mut DeviceArray,
    trains: &PulseTrains,
    firing: &SlotFiring,
    sign: UpdateSign,
    sigma_c2c: f64,
    rng: &mut SimRng,
) -> u64 {
    coincide(dev, trains, &firing.rows, &firing.cols, sign, sigma_c2c, rng)
}

fn coincide(
    dev: &mut DeviceArray,
    trains: &PulseTrains,
    rows: &[usize],
    cols: &[usize],
    sign: UpdateSign,
    sigma_c2c: f64,
    rng: &mut SimRng,
) -> u64 {
    let s = -sign.factor();
    for &i in rows {
        let si = s * trains.sign_rows[i];
        let base = i * dev.cols;
        for &j in cols {
            dev.pulse(base + j, si * trains.sign_cols[j], sigma_c2c, rng);
        }
    }
    (rows.len() * cols.len()) as u64
}

/// Line indices grouped by firing slot (a transposed set of masks).
#[derive(Default)]
struct ByLine {
    start: Vec<usize>,
    lines: Vec<usize>,
}

impl ByLine {
    fn fill(&mut self, masks: &[u64], slots: u32) {
        self.start.clear();
        self.start.resize(slots as usize + 1, 0);
        for &m in masks {
            let mut m = m;
            while m != 0 {
                self.start[m.trailing_zeros() as usize + 1] += 1;
                m &= m - 1;
            }
        }
        for s in 0..slots as usize {
            self.start[s + 1] += self.start[s];
        }
        self.lines.clear();
        self.lines.resize(self.start[slots as usize], 0);
        let mut next = self.start.clone();
        for (k, &m) in masks.iter().enumerate() {
            let mut m = m;
            while m != 0 {
                let s = m.trailing_zeros() as usize;
                self.lines[next[s]] = k;
                next[s] += 1;
                m &= m - 1;
            }
        }
    }

    fn slot(&self, s: usize) -> &[usize] {
        &self.lines[self.start[s]..self.start[s + 1]]
    }
}

#[derive(Default)]
struct SlotIndex {
    rows: ByLine,
    cols: ByLine,
}

/// Pulse-coincidence update of `dev` with expected change `−sign·η·d_i·x_j`.
#[allow(clippy::too_many_arguments)]
pub fn pulse_update(
    dev: &mut DeviceArray,
    x: &[f64],
    d: &[f64],
    cfg: &PulseUpdateConfig,
    sign: UpdateSign,
    sigma_c2c: f64,
    rng: &mut SimRng,
    mut trace: Option<&mut Vec<SlotFiring>>,
) -> Result<UpdateStats> {
    check_len("update input x", dev.cols, x.len())?;
    check_len("update error d", dev.rows, d.len())?;
    let trains = PulseTrains::encode(x, d, cfg);
    let mut stats = UpdateStats { pulses: 0, clipped: trains.clipped };
    if trains.p_cols.iter().all(|p| *p == 0.0) || trains.q_rows.iter().all(|q| *q == 0.0) {
        return Ok(stats);
    }
    let mut remaining = cfg.bl;
    let mut by_slot = SlotIndex::default();
    let mut firing = SlotFiring::default();
    while remaining > 0 {
        let slots = remaining.min(64);
        remaining -= slots;
        let (rows, cols) = trains.sample_masks(slots, rng);
        by_slot.rows.fill(&rows, slots);
        by_slot.cols.fill(&cols, slots);
        for slot in 0..slots as usize {
            let (r, c) = (by_slot.rows.slot(slot), by_slot.cols.slot(slot));
            stats.pulses += coincide(dev, &trains, r, c, sign, sigma_c2c, rng);
            if let Some(t) = trace.as_deref_mut() {
                firing.rows = r.to_vec();
                firing.cols = c.to_vec();
                t.push(firing.clone());
            }
        }
    }
    Ok(stats)
}

fn add_read_noise(y: &mut [f64], sigma: f64, rng: &mut SimRng) {
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        for v in y {
            *v += n.sample(rng);
        }
    }
}

/// `(main − ref)·x` plus read noise.
pub fn analog_forward(
    dev: &DeviceArray,
    reference: &[f64],
    x: &[f64],
    sigma_read: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    check_len("forward input", dev.cols, x.len())?;
    let mut y = vec![0.0; dev.rows];
    for (i, yi) in y.iter_mut().enumerate() {
        let row = i * dev.cols..(i + 1) * dev.cols;
        *yi = diff_dot(&dev.w[row.clone()], &reference[row], x);
    }
    add_read_noise(&mut y, sigma_read, rng);
    Ok(y)
}

/// `(main − ref)ᵀ·d` plus read noise.
pub fn analog_backward(
    dev: &DeviceArray,
    reference: &[f64],
    d: &[f64],
    sigma_read: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    check_len("backward input", dev.rows, d.len())?;
    let mut z = vec![0.0; dev.cols];
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        let row = i * dev.cols..(i + 1) * dev.cols;
        for ((zj, w), r) in z.iter_mut().zip(&dev.w[row.clone()]).zip(&reference[row]) {
            *zj += (w - r) * di;
        }
    }
    add_read_noise(&mut z, sigma_read, rng);
    Ok(z)
}

/// Pulse order used while relaxing devices to their symmetry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroShiftMode {
    /// Strictly alternating up/down pulses.
    #[default]
    Alternating,
    /// Independent equiprobable directions.
    RandomOrder,
}

/// Outcome of a zero-shift initialization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ZeroShiftReport {
    /// Devices with κ = 0, which have no symmetry point to converge to.
    pub symmetric_devices: usize,
}

impl ZeroShiftReport {
    pub fn has_warning(&self) -> bool {
        self.symmetric_devices > 0
    }
}

/// Relaxes each device toward its symmetry point with `n_pulses` pulses.
pub fn relax_to_symmetry(
    dev: &mut DeviceArray,
    n_pulses: u64,
    mode: ZeroShiftMode,
    sigma_c2c: f64,
    rng: &mut SimRng,
) -> ZeroShiftReport {
    let symmetric_devices = dev.kappa.iter().filter(|k| **k == 0.0).count();
    for k in 0..dev.len() {
        match mode {
            ZeroShiftMode::Alternating => {
                for p in 0..n_pulses {
                    let dir = if p % 2 == 0 { 1.0 } else { -1.0 };
                    dev.pulse(k, dir, sigma_c2c, rng);
                }
            }
            ZeroShiftMode::RandomOrder => {
                let mut bits = 0u64;
                for p in 0..n_pulses {
                    if p % 64 == 0 {
                        bits = rng.random();
                    }
                    let dir = if (bits >> (p % 64)) & 1 == 1 { 1.0 } else { -1.0 };
                    dev.pulse(k, dir, sigma_c2c, rng);
                }
            }
        }
    }
    ZeroShiftReport { symmetric_devices }
}

/// A main device array read differentially against a fixed reference array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub main: DeviceArray,
    pub reference: Vec<f64>,
    pub noise: NoiseModel,
}

impl Tile {
    pub fn new(main: DeviceArray, reference: Vec<f64>, noise: NoiseModel) -> Result<Self> {
        check_len("reference array", main.len(), reference.len())?;
        noise.validate()?;
        Ok(Self { main, reference, noise })
    }

    /// Tile of identical devices with a zero reference.
    pub fn uniform(rows: usize, cols: usize, template: &DeviceState, noise: NoiseModel) -> Self {
        Self { main: DeviceArray::uniform(rows, cols, template), reference: vec![0.0; rows * cols], noise }
    }

    /// Tile of devices with device-to-device variation and a zero reference.
    pub fn sampled(rows: usize, cols: usize, template: &DeviceState, noise: NoiseModel, rng: &mut SimRng) -> Self {
        Self { main: DeviceArray::sampled(rows, cols, template, &noise, rng), reference: vec![0.0; rows * cols], noise }
    }

    pub fn rows(&self) -> usize {
        self.main.rows
    }

    pub fn cols(&self) -> usize {
        self.main.cols
    }

    pub fn forward(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        analog_forward(&self.main, &self.reference, x, self.noise.sigma_read, rng)
    }

    pub fn backward(&self, d: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        analog_backward(&self.main, &self.reference, d, self.noise.sigma_read, rng)
    }

    pub fn stochastic_update(
        &mut self,
        x: &[f64],
        d: &[f64],
        cfg: &PulseUpdateConfig,
        sign: UpdateSign,
        rng: &mut SimRng,
    ) -> Result<UpdateStats> {
        pulse_update(&mut self.main, x, d, cfg, sign, self.noise.sigma_c2c, rng, None)
    }

    /// Same as [`Tile::stochastic_update`], also returning every slot's firing sets.
    pub fn stochastic_update_traced(
        &mut self,
        x: &[f64],
        d: &[f64],
        cfg: &PulseUpdateConfig,
        sign: UpdateSign,
        rng: &mut SimRng,
    ) -> Result<(UpdateStats, Vec<SlotFiring>)> {
        let mut trace = Vec::with_capacity(cfg.bl as usize);
        let stats = pulse_update(&mut self.main, x, d, cfg, sign, self.noise.sigma_c2c, rng, Some(&mut trace))?;
        Ok((stats, trace))
    }

    /// Drives every main device to its symmetry point, then copies the result
    /// into the reference so the differential weights read zero.
    pub fn zero_shift_init(&mut self, n_pulses: u64, mode: ZeroShiftMode, rng: &mut SimRng) -> ZeroShiftReport {
        let report = relax_to_symmetry(&mut self.main, n_pulses, mode, self.noise.sigma_c2c, rng);
        self.reference.copy_from_slice(&self.main.w);
        report
    }

    /// Exact differential weights. Diagnostic only: training never reads
    /// individual devices.
    pub fn read_weights(&self) -> Matrix {
        Matrix {
            rows: self.rows(),
            cols: self.cols(),
            data: self.main.w.iter().zip(&self.reference).map(|(w, r)| w - r).collect(),
        }
    }

    /// Programs the main array so that the differential weights equal `w`
    /// (up to clipping at the conductance bounds).
    pub fn program_weights(&mut self, w: &Matrix) -> Result<()> {
        check_len("programmed weights", self.main.len(), w.data.len())?;
        let target: Vec<f64> = w.data.iter().zip(&self.reference).map(|(v, r)| v + r).collect();
        self.main.program(&target)
    }

    pub fn to_snapshot(&self) -> TileSnapshot {
        TileSnapshot {
            rows: self.rows(),
            cols: self.cols(),
            dw0: self.main.dw0.clone(),
            kappa: self.main.kappa.clone(),
            w_sym: self.main.w_sym.clone(),
            w: self.main.w.clone(),
            reference: self.reference.clone(),
            w_min: self.main.w_min,
            w_max: self.main.w_max,
            noise: self.noise,
        }
    }

    pub fn from_snapshot(s: &TileSnapshot) -> Result<Self> {
        let n = s.rows * s.cols;
        for (name, v) in [("dw0", &s.dw0), ("kappa", &s.kappa), ("w_sym", &s.w_sym), ("w", &s.w), ("ref", &s.reference)]
        {
            check_len(name, n, v.len())?;
        }
        let main = DeviceArray {
            rows: s.rows,
            cols: s.cols,
            w: s.w.clone(),
            w_sym: s.w_sym.clone(),
            dw0: s.dw0.clone(),
            kappa: s.kappa.clone(),
            w_min: s.w_min,
            w_max: s.w_max,
        };
        Tile::new(main, s.reference.clone(), s.noise)
    }
}

/// JSON persistence format of a tile; arrays are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSnapshot {
    pub rows: usize,
    pub cols: usize,
    pub dw0: Vec<f64>,
    pub kappa: Vec<f64>,
    pub w_sym: Vec<f64>,
    pub w: Vec<f64>,
    #[serde(rename = "ref")]
    pub reference: Vec<f64>,
    #[serde(default = "default_w_min")]
    pub w_min: f64,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default)]
    pub noise: NoiseModel,
}

fn default_w_min() -> f64 {
    -1.0
}

fn default_w_max() -> f64 {
    1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::dot;
    use crate::rng::seeded;
    use crate::stats::{mean, std_dev};
    use proptest::prelude::*;

    fn tile_from(main: &[Vec<f64>], reference: &[Vec<f64>]) -> Tile {
        let m = Matrix::from_rows(main);
        let mut arr = DeviceArray::uniform(m.rows, m.cols, &DeviceState::default());
        arr.w = m.data;
        Tile::new(arr, Matrix::from_rows(reference).data, NoiseModel::ideal()).unwrap()
    }

    #[test]
    fn forward_identity() {
        let t = tile_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.0; 2], vec![0.0; 2]]);
        let mut rng = seeded(0);
        assert_eq!(t.forward(&[3.0, -2.0], &mut rng).unwrap(), vec![3.0, -2.0]);
        assert_eq!(t.backward(&[1.0, 2.0], &mut rng).unwrap(), vec![1.0, 2.0]);
        assert_eq!(t.read_weights().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn differential_pair_cancels() {
        let rows = vec![vec![0.3, -0.2, 0.7]; 2];
        let t = tile_from(&rows, &rows);
        let mut rng = seeded(0);
        assert_eq!(t.forward(&[1.0, 5.0, -3.0], &mut rng).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_backward_hand_values() {
        let t = tile_from(&[vec![0.5, -0.25]], &[vec![0.1, 0.1]]);
        let mut rng = seeded(0);
        let y = t.forward(&[2.0, 4.0], &mut rng).unwrap();
        assert!((y[0] + 0.6).abs() < 1e-12);
        let z = t.backward(&[1.0], &mut rng).unwrap();
        assert!((z[0] - 0.4).abs() < 1e-12 && (z[1] + 0.35).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let t = Tile::uniform(2, 3, &DeviceState::default(), NoiseModel::ideal());
        let mut rng = seeded(0);
        assert!(matches!(t.forward(&[1.0; 2], &mut rng), Err(Error::Shape(_))));
        assert!(matches!(t.backward(&[1.0; 3], &mut rng), Err(Error::Shape(_))));
        let mut t = t;
        let cfg = PulseUpdateConfig::new(1, 1.0, 1.0);
        assert!(t.stochastic_update(&[1.0; 2], &[1.0; 2], &cfg, UpdateSign::Descent, &mut rng).is_err());
    }

    #[test]
    fn read_noise_is_additive_with_requested_spread() {
        let mut t = Tile::uniform(1, 1, &DeviceState::default(), NoiseModel::ideal());
        t.noise.sigma_read = 0.02;
        let mut rng = seeded(9);
        let ys: Vec<f64> = (0..20_000).map(|_| t.forward(&[100.0], &mut rng).unwrap()[0]).collect();
        assert!(mean(&ys).abs() < 0.001);
        assert!((std_dev(&ys) - 0.02).abs() < 0.001);
    }

    #[test]
    fn zero_input_fires_nothing() {
        let mut t = Tile::uniform(3, 4, &DeviceState::default(), NoiseModel::ideal());
        let before = t.clone();
        let cfg = PulseUpdateConfig::new(10, 1.0, 1.0);
        let mut rng = seeded(1);
        let s = t.stochastic_update(&[0.0; 4], &[1.0, -1.0, 0.5], &cfg, UpdateSign::Descent, &mut rng).unwrap();
        assert_eq!(s.pulses, 0);
        assert_eq!(t, before);
    }

    #[test]
    fn coincidences_are_row_column_products() {
        let mut t = Tile::uniform(5, 6, &DeviceState::new(0.0, 0.001, 0.0), NoiseModel::ideal());
        let x = [0.9, -0.4, 0.0, 0.7, -1.0, 0.2];
        let d = [0.5, -0.8, 0.3, 0.0, 1.0];
        let cfg = PulseUpdateConfig::new(7, 1.0, 1.0);
        let mut rng = seeded(11);
        let before = t.main.w.clone();
        let (stats, trace) = t.stochastic_update_traced(&x, &d, &cfg, UpdateSign::Descent, &mut rng).unwrap();
        assert_eq!(trace.len(), 7);
        // per-crosspoint pulse count is the sum over slots of row_fired·col_fired
        let mut count = vec![0i64; 30];
        for slot in &trace {
            for &i in &slot.rows {
                for &j in &slot.cols {
                    count[i * 6 + j] += 1;
                }
            }
        }
        assert_eq!(count.iter().sum::<i64>() as u64, stats.pulses);
        for (i, &di) in d.iter().enumerate() {
            for (j, &xj) in x.iter().enumerate() {
                let k = i * 6 + j;
                assert!(count[k] <= 7);
                let dir = -(xj.signum() * di.signum());
                let expected = before[k] + dir * 0.001 * count[k] as f64;
                assert!((t.main.w[k] - expected).abs() < 1e-12);
                if xj == 0.0 || di == 0.0 {
                    assert_eq!(count[k], 0);
                }
            }
        }
    }

    /// Exact expectation by enumerating every firing pattern of a 1×1 tile at
    /// `bl = 2`: 2 slots × (row, column) bits = 16 patterns.
    #[test]
    fn bl2_enumeration_matches_expectation() {
        let (p, q) = (0.3, 0.6);
        let cfg = PulseUpdateConfig::new(2, 1.0, 1.0);
        let trains = PulseTrains::encode(&[p], &[q], &cfg);
        let mut expected = 0.0;
        for pattern in 0u32..16 {
            let mut prob = 1.0;
            let mut tile = Tile::uniform(1, 1, &DeviceState::new(0.0, 0.001, 0.0), NoiseModel::ideal());
            let mut rng = seeded(0);
            for slot in 0..2 {
                let col = pattern >> (2 * slot) & 1 == 1;
                let row = pattern >> (2 * slot + 1) & 1 == 1;
                prob *= if col { p } else { 1.0 - p };
                prob *= if row { q } else { 1.0 - q };
                let firing =
                    SlotFiring { rows: if row { vec![0] } else { vec![] }, cols: if col { vec![0] } else { vec![] } };
                apply_coincidences(&mut tile.main, &trains, &firing, UpdateSign::Descent, 0.0, &mut rng);
            }
            expected += prob * tile.main.w[0];
        }
        let analytic = -cfg.learning_rate(0.001) * p * q;
        assert!((expected - analytic).abs() < 1e-15, "{expected} vs {analytic}");
    }

    #[test]
    fn update_is_unbiased() {
        let cfg = PulseUpdateConfig::new(10, 0.1, 0.1);
        let tmpl = DeviceState::new(0.0, 0.001, 0.0);
        let mut rng = seeded(21);
        let mut tile = Tile::uniform(1, 1, &tmpl, NoiseModel::ideal());
        let trials = 100_000;
        let deltas: Vec<f64> = (0..trials)
            .map(|_| {
                tile.main.w[0] = 0.0;
                tile.stochastic_update(&[1.0], &[1.0], &cfg, UpdateSign::Descent, &mut rng).unwrap();
                tile.main.w[0]
            })
            .collect();
        let m = mean(&deltas);
        let se = std_dev(&deltas) / (trials as f64).sqrt();
        assert!((m + 1e-4).abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn ascent_flips_direction() {
        let cfg = PulseUpdateConfig::new(5, 1.0, 1.0);
        let mut t = Tile::uniform(1, 1, &DeviceState::new(0.0, 0.001, 0.0), NoiseModel::ideal());
        let mut rng = seeded(2);
        t.stochastic_update(&[1.0], &[1.0], &cfg, UpdateSign::Ascent, &mut rng).unwrap();
        assert!((t.main.w[0] - 0.005).abs() < 1e-12);
    }

    #[test]
    fn clipped_probabilities_are_reported() {
        let cfg = PulseUpdateConfig::new(1, 1.0, 1.0);
        let mut t = Tile::uniform(1, 2, &DeviceState::default(), NoiseModel::ideal());
        let mut rng = seeded(3);
        let s = t.stochastic_update(&[2.0, 0.5], &[3.0], &cfg, UpdateSign::Descent, &mut rng).unwrap();
        assert_eq!(s.clipped, 2);
    }

    #[test]
    fn zero_shift_without_pulses_copies_main() {
        let mut rng = seeded(4);
        let noise = NoiseModel { sigma_d2d_wsym: 0.05, ..NoiseModel::ideal() };
        let mut t = Tile::sampled(4, 4, &DeviceState::new(0.0, 0.001, 0.5).with_w(0.3), noise, &mut rng);
        let r = t.zero_shift_init(0, ZeroShiftMode::Alternating, &mut rng);
        assert!(!r.has_warning());
        assert!(t.read_weights().data.iter().all(|v| *v == 0.0));
        assert_eq!(t.forward(&[1.0, -2.0, 3.0, 0.5], &mut rng).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn zero_shift_converges_to_symmetry_points() {
        let mut rng = seeded(5);
        let noise = NoiseModel { sigma_d2d_wsym: 0.05, ..NoiseModel::ideal() };
        let tmpl = DeviceState::new(0.0, 0.001, 0.5).with_w(0.6);
        let mut t = Tile::sampled(8, 8, &tmpl, noise, &mut rng);
        t.zero_shift_init(20_000, ZeroShiftMode::Alternating, &mut rng);
        let dev: Vec<f64> = t.main.w.iter().zip(&t.main.w_sym).map(|(w, s)| (w - s).abs()).collect();
        assert!(mean(&dev) < 0.01, "{}", mean(&dev));
        assert!(t.read_weights().max_abs() < 0.02);
    }

    #[test]
    fn zero_shift_warns_on_symmetric_devices() {
        let mut rng = seeded(6);
        let mut t = Tile::uniform(2, 2, &DeviceState::new(0.0, 0.001, 0.0), NoiseModel::ideal());
        let r = t.zero_shift_init(10, ZeroShiftMode::RandomOrder, &mut rng);
        assert_eq!(r.symmetric_devices, 4);
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let mut rng = seeded(7);
        let noise = NoiseModel { sigma_d2d_dw0: 0.2, sigma_d2d_wsym: 0.1, sigma_c2c: 0.1, sigma_read: 0.01 };
        let mut t = Tile::sampled(3, 5, &DeviceState::new(0.0, 0.001, 0.4), noise, &mut rng);
        t.zero_shift_init(100, ZeroShiftMode::RandomOrder, &mut rng);
        let cfg = PulseUpdateConfig::new(10, 1.0, 1.0);
        t.stochastic_update(&[0.3, -0.1, 0.9, 0.2, -0.6], &[0.5, -0.2, 0.8], &cfg, UpdateSign::Descent, &mut rng)
            .unwrap();
        let json = serde_json::to_string(&t.to_snapshot()).unwrap();
        let back = Tile::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, t);
        let (a, b) = (t.read_weights(), back.read_weights());
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(json.contains("\"ref\""));
    }

    #[test]
    fn identical_seeds_give_identical_tiles() {
        let run = || {
            let mut rng = seeded(99);
            let noise = NoiseModel { sigma_c2c: 0.1, sigma_read: 0.01, ..NoiseModel::ideal() };
            let mut t = Tile::sampled(3, 3, &DeviceState::new(0.0, 0.001, 0.5), noise, &mut rng);
            let cfg = PulseUpdateConfig::new(10, 1.0, 1.0);
            for _ in 0..20 {
                let y = t.forward(&[0.2, -0.5, 0.9], &mut rng).unwrap();
                t.stochastic_update(&[0.2, -0.5, 0.9], &y, &cfg, UpdateSign::Descent, &mut rng).unwrap();
            }
            t
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn backward_is_adjoint_of_forward(
            vals in proptest::collection::vec(-1.0f64..1.0, 12),
            refs in proptest::collection::vec(-0.5f64..0.5, 12),
            x in proptest::collection::vec(-3.0f64..3.0, 4),
            d in proptest::collection::vec(-3.0f64..3.0, 3),
        ) {
            let mut arr = DeviceArray::uniform(3, 4, &DeviceState::default());
            arr.w = vals;
            let t = Tile::new(arr, refs, NoiseModel::ideal()).unwrap();
            let mut rng = seeded(0);
            let y = t.forward(&x, &mut rng).unwrap();
            let z = t.backward(&d, &mut rng).unwrap();
            prop_assert!((dot(&y, &d) - dot(&x, &z)).abs() < 1e-12);
        }
    }
}
