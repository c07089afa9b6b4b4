use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// Per-feature z-score statistics frozen from a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits means and standard deviations; constant columns get `sd = 1`.
    pub fn fit(x: &Matrix) -> Self {
        let (n, m) = (x.rows(), x.cols());
        let mut mean = vec![0.0; m];
        let mut sd = vec![1.0; m];
        if n == 0 {
            return Self { mean, sd };
        }
        for row in x.iter_rows() {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let mut var = vec![0.0; m];
        for row in x.iter_rows() {
            for j in 0..m {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        for j in 0..m {
            let s = (var[j] / n as f64).sqrt();
            sd[j] = if s > 1e-12 { s } else { 1.0 };
        }
        Self { mean, sd }
    }

    pub fn identity(m: usize) -> Self {
        Self {
            mean: vec![0.0; m],
            sd: vec![1.0; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Writes the standardized row into `out`.
    #[inline]
    pub fn transform_into(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..self.mean.len() {
            out[j] = (row[j] - self.mean[j]) / self.sd[j];
        }
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.transform_into(x.row(i), out.row_mut(i));
        }
        out
    }
}

/// Affine scores `s_c = sum_j z_j * W[j][c] + W[m][c]` for every column `c`
/// of a row-major `(m + 1) x k` weight block, intercept in the last row.
#[inline]
pub(crate) fn affine_scores(z: &[f64], weights: &[f64], k: usize, out: &mut [f64]) {
    let m = z.len();
    out[..k].copy_from_slice(&weights[m * k..(m + 1) * k]);
    for (j, &zj) in z.iter().enumerate() {
        if zj == 0.0 {
            continue;
        }
        let w = &weights[j * k..(j + 1) * k];
        for c in 0..k {
            out[c] += zj * w[c];
        }
    }
}
