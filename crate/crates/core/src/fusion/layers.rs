use serde::{Deserialize, Serialize};

use crate::numcore::{xavier_init, Matrix, SeededRng, BN_EPS};
use crate::Result;

/// Running-statistics momentum for batch norm.
pub const BN_MOMENTUM: f64 = 0.1;

/// Affine map `x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn init(d_in: usize, d_out: usize, rng: &mut SeededRng) -> Self {
        Self { weight: xavier_init(d_in, d_out, rng), bias: vec![0.0; d_out] }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { weight: Matrix::zeros(d_in, d_out), bias: vec![0.0; d_out] }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        x.matmul(&self.weight)?.add_row_vector(&self.bias)
    }

    /// Accumulates parameter gradients into `grad` and returns `dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Result<Matrix> {
        grad.weight.add_assign(&x.t_matmul(dy)?)?;
        for (g, s) in grad.bias.iter_mut().zip(dy.col_sums()) {
            *g += s;
        }
        dy.matmul_t(&self.weight)
    }
}

/// Per-feature batch normalisation over the batch dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
    /// Batch mean and biased variance; `None` when running stats were used.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(d: usize) -> Self {
        Self { gamma: vec![1.0; d], beta: vec![0.0; d], running_mean: vec![0.0; d], running_var: vec![1.0; d] }
    }

    pub fn zeros(d: usize) -> Self {
        Self { gamma: vec![0.0; d], beta: vec![0.0; d], running_mean: vec![0.0; d], running_var: vec![0.0; d] }
    }

    pub fn forward(&self, x: &Matrix, use_batch_stats: bool) -> (Matrix, BatchNormCache) {
        let (rows, cols) = x.shape();
        let (mean, var, batch_stats) = if use_batch_stats {
            let n = rows as f64;
            let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / n).collect();
            let mut var = vec![0.0; cols];
            for row in x.row_iter() {
                for ((v, xi), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (xi - m) * (xi - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            (mean.clone(), var.clone(), Some((mean, var)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut y = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let h = (x[(i, j)] - mean[j]) * inv_std[j];
                xhat[(i, j)] = h;
                y[(i, j)] = self.gamma[j] * h + self.beta[j];
            }
        }
        (y, BatchNormCache { xhat, inv_std, batch_stats })
    }

    pub fn backward(&self, dy: &Matrix, cache: &BatchNormCache, grad: &mut BatchNorm) -> Matrix {
        let (rows, cols) = dy.shape();
        let n = rows as f64;
        let mut dx = Matrix::zeros(rows, cols);
        for j in 0..cols {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..rows {
                sum_dy += dy[(i, j)];
                sum_dy_xhat += dy[(i, j)] * cache.xhat[(i, j)];
            }
            grad.gamma[j] += sum_dy_xhat;
            grad.beta[j] += sum_dy;
            let g = self.gamma[j] * cache.inv_std[j];
            if cache.batch_stats.is_some() {
                for i in 0..rows {
                    dx[(i, j)] = g / n * (n * dy[(i, j)] - sum_dy - cache.xhat[(i, j)] * sum_dy_xhat);
                }
            } else {
                for i in 0..rows {
                    dx[(i, j)] = g * dy[(i, j)];
                }
            }
        }
        dx
    }

    /// Folds batch statistics into the running estimates (unbiased variance).
    pub fn update_running(&mut self, cache: &BatchNormCache, batch: usize) {
        if let Some((mean, var)) = &cache.batch_stats {
            let unbias = if batch > 1 { batch as f64 / (batch - 1) as f64 } else { 1.0 };
            for j in 0..mean.len() {
                self.running_mean[j] = (1.0 - BN_MOMENTUM) * self.running_mean[j] + BN_MOMENTUM * mean[j];
                self.running_var[j] = (1.0 - BN_MOMENTUM) * self.running_var[j] + BN_MOMENTUM * var[j] * unbias;
            }
        }
    }
}

/// Inverted-dropout mask: entries are 0 or 1/(1−p). `None` when inactive.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut SeededRng) -> Option<Matrix> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect();
    Some(Matrix::new(rows, cols, data).expect("mask length matches"))
}

pub fn apply_mask(x: &Matrix, mask: Option<&Matrix>) -> Matrix {
    match mask {
        Some(m) => x.hadamard(m).expect("mask shape matches activation"),
        None => x.clone(),
    }
}
