use crate::crossbar::UpdateStats;
use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng::SimRng;

use super::WeightBackend;

/// Floating-point weights updated by exact SGD, `W ← W − lr·d·xᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalBackend {
    pub w: Matrix,
    pub lr: f64,
}

impl DigitalBackend {
    pub fn new(w: Matrix, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidParam(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self { w, lr })
    }
}

impl WeightBackend for DigitalBackend {
    fn name(&self) -> &'static str {
        "digital-fp"
    }

    fn rows(&self) -> usize {
        self.w.rows
    }

    fn cols(&self) -> usize {
        self.w.cols
    }

    fn forward(&self, x: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.w.matvec(x)
    }

    fn backward(&self, d: &[f64], _rng: &mut SimRng) -> Result<Vec<f64>> {
        self.w.matvec_t(d)
    }

    fn update(&mut self, x: &[f64], d: &[f64], _rng: &mut SimRng) -> Result<UpdateStats> {
        check_len("update input x", self.w.cols, x.len())?;
        check_len("update error d", self.w.rows, d.len())?;
        let cols = self.w.cols;
        for (i, &di) in d.iter().enumerate() {
            if di == 0.0 {
                continue;
            }
            let s = self.lr * di;
            for (w, xj) in self.w.data[i * cols..(i + 1) * cols].iter_mut().zip(x) {
                *w -= s * xj;
            }
        }
        Ok(UpdateStats::default())
    }

    fn read_weights(&self) -> Matrix {
        self.w.clone()
    }

    fn program_weights(&mut self, w: &Matrix) -> Result<()> {
        check_len("programmed weights", self.w.data.len(), w.data.len())?;
        self.w.data.copy_from_slice(&w.data);
        Ok(())
    }

    fn array_count(&self) -> usize {
        0
    }

    fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({ "backend": self.name(), "lr": self.lr, "w": self.w })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn exact_sgd_step() {
        let mut b = DigitalBackend::new(Matrix::from_rows(&[vec![1.0, 2.0]]), 0.5).unwrap();
        b.update(&[1.0, -2.0], &[0.4], &mut seeded(0)).unwrap();
        assert_eq!(b.w.data, vec![0.8, 2.4]);
    }
}
