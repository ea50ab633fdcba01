use crate::crossbar::{PulseUpdateConfig, Tile, UpdateSign, UpdateStats};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng::SimRng;

use super::{BackendSpec, Management, WeightBackend};

/// Conventional SGD on a single main/reference pair. The reference array is
/// set once at construction and never written again.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdTile {
    pub tile: Tile,
    pub update_cfg: PulseUpdateConfig,
    pub management: Management,
}

impl SgdTile {
    pub fn new(tile: Tile, update_cfg: PulseUpdateConfig) -> Result<Self> {
        update_cfg.validate()?;
        Ok(Self { tile, update_cfg, management: Management::default() })
    }

    /// Samples devices, zero-shifts them, and sets the reference from the result.
    pub fn from_spec(rows: usize, cols: usize, spec: &BackendSpec, rng: &mut SimRng) -> Result<Self> {
        spec.validate()?;
        let mut tile = Tile::sampled(rows, cols, &spec.device, spec.noise, rng);
        tile.zero_shift_init(spec.n_init_pulses, spec.zero_shift, rng);
        let mut s = Self::new(tile, spec.update_config())?;
        s.management = spec.management;
        Ok(s)
    }
}

impl WeightBackend for SgdTile {
    fn name(&self) -> &'static str {
        "analog-sgd"
    }

    fn rows(&self) -> usize {
        self.tile.rows()
    }

    fn cols(&self) -> usize {
        self.tile.cols()
    }

    fn forward(&self, x: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.management.scaled_product(x, |v| self.tile.forward(v, rng))
    }

    fn backward(&self, d: &[f64], rng: &mut SimRng) -> Result<Vec<f64>> {
        self.management.scaled_product(d, |v| self.tile.backward(v, rng))
    }

    fn update(&mut self, x: &[f64], d: &[f64], rng: &mut SimRng) -> Result<UpdateStats> {
        let cfg = self.management.update_config(&self.update_cfg, x, d);
        self.tile.stochastic_update(x, d, &cfg, UpdateSign::Descent, rng)
    }

    fn read_weights(&self) -> Matrix {
        self.tile.read_weights()
    }

    fn program_weights(&mut self, w: &Matrix) -> Result<()> {
        self.tile.program_weights(w)
    }

    fn array_count(&self) -> usize {
        2
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "backend": self.name(),
            "update_cfg": self.update_cfg,
            "tile": self.tile.to_snapshot(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceState, NoiseModel};
    use crate::rng::seeded;

    #[test]
    fn zero_error_leaves_tile_unchanged() {
        let tile = Tile::uniform(2, 3, &DeviceState::new(0.0, 0.001, 0.5), NoiseModel::ideal());
        let mut s = SgdTile::new(tile, PulseUpdateConfig::new(10, 1.0, 1.0)).unwrap();
        let before = s.clone();
        s.update(&[0.5, -1.0, 0.2], &[0.0, 0.0], &mut seeded(0)).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn update_descends() {
        let tile = Tile::uniform(1, 1, &DeviceState::new(0.0, 0.001, 0.0), NoiseModel::ideal());
        let mut s = SgdTile::new(tile, PulseUpdateConfig::new(10, 1.0, 1.0)).unwrap();
        s.update(&[1.0], &[1.0], &mut seeded(0)).unwrap();
        assert!((s.read_weights().data[0] + 0.01).abs() < 1e-12);
    }
}
