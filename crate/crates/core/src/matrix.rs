use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Dense row-major matrix used for weight read-out and the digital backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        assert_eq!(data.len(), rows.len() * cols, "ragged rows");
        Self { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// `W x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("matvec input", self.cols, x.len())?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `Wᵀ d`
    pub fn matvec_t(&self, d: &[f64]) -> Result<Vec<f64>> {
        check_len("transposed matvec input", self.rows, d.len())?;
        let mut z = vec![0.0; self.cols];
        for (i, &di) in d.iter().enumerate() {
            if di == 0.0 {
                continue;
            }
            for (zj, wij) in z.iter_mut().zip(self.row(i)) {
                *zj += wij * di;
            }
        }
        Ok(z)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Four independent accumulators let the compiler vectorize the reduction.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ (w_k − r_k)·x_k`.
#[inline]
pub fn diff_dot(w: &[f64], r: &[f64], x: &[f64]) -> f64 {
    let n = w.len().min(r.len()).min(x.len());
    let (w, r, x) = (&w[..n], &r[..n], &x[..n]);
    let mut acc = [0.0; 4];
    let (cw, cr, cx) = (w.chunks_exact(4), r.chunks_exact(4), x.chunks_exact(4));
    let tail: f64 = cw.remainder().iter().zip(cr.remainder()).zip(cx.remainder()).map(|((w, r), x)| (w - r) * x).sum();
    for ((w, r), x) in cw.zip(cr).zip(cx) {
        for k in 0..4 {
            acc[k] += (w[k] - r[k]) * x[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
