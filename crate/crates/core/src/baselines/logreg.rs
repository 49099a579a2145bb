use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::numcore::{log_sum_exp, softmax_rows, Matrix};
use crate::{Error, Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub l2: f64,
    pub iters: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2: 1e-2, iters: 300, lr: 0.1 }
    }
}

/// Multinomial logistic regression, `softmax(XW + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl LogRegModel {
    pub fn zeros(d: usize, l2: f64) -> Self {
        Self { weight: Matrix::zeros(d, N_CLASSES), bias: vec![0.0; N_CLASSES], l2 }
    }
}

/// Mean cross-entropy plus `l2/2·‖W‖²`, and its gradients `(loss, dW, db)`.
pub fn logreg_loss_grad(m: &LogRegModel, x: &Matrix, y: &[usize]) -> Result<(f64, Matrix, Vec<f64>)> {
    let logits = x.matmul(&m.weight)?.add_row_vector(&m.bias)?;
    let n = x.rows() as f64;
    let mut ce = 0.0;
    for (row, &t) in logits.row_iter().zip(y) {
        ce += log_sum_exp(row) - row[t];
    }
    let mut d = softmax_rows(&logits);
    for (i, &t) in y.iter().enumerate() {
        d[(i, t)] -= 1.0;
    }
    let d = d.scale(1.0 / n);
    let reg: f64 = m.weight.data().iter().map(|w| w * w).sum::<f64>() * m.l2 / 2.0;
    let mut gw = x.t_matmul(&d)?;
    gw.add_assign(&m.weight.scale(m.l2))?;
    Ok((ce / n + reg, gw, d.col_sums()))
}

/// Full-batch proximal gradient descent from zero initialisation.
pub fn logreg_fit(x: &Matrix, y: &[usize], cfg: &LogRegConfig) -> Result<LogRegModel> {
    check_xy(x, y)?;
    if !(cfg.l2 >= 0.0) || !(cfg.lr > 0.0) {
        return Err(Error::Param(format!("logreg needs l2 >= 0 and lr > 0, got {} and {}", cfg.l2, cfg.lr)));
    }
    let mut m = LogRegModel::zeros(x.cols(), cfg.l2);
    let shrink = 1.0 / (1.0 + cfg.lr * cfg.l2);
    for _ in 0..cfg.iters {
        let logits = x.matmul(&m.weight)?.add_row_vector(&m.bias)?;
        let mut d = softmax_rows(&logits);
        for (i, &t) in y.iter().enumerate() {
            d[(i, t)] -= 1.0;
        }
        let d = d.scale(1.0 / x.rows() as f64);
        let gw = x.t_matmul(&d)?;
        for (w, g) in m.weight.data_mut().iter_mut().zip(gw.data()) {
            *w = (*w - cfg.lr * g) * shrink;
        }
        for (b, g) in m.bias.iter_mut().zip(d.col_sums()) {
            *b -= cfg.lr * g;
        }
    }
    Ok(m)
}

pub fn logreg_predict_proba(m: &LogRegModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != m.weight.rows() {
        return Err(Error::Shape(format!("logreg expects {} features, got {}", m.weight.rows(), x.cols())));
    }
    Ok(softmax_rows(&x.matmul(&m.weight)?.add_row_vector(&m.bias)?))
}
