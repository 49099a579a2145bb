use serde::{Deserialize, Serialize};

use super::check_xy;
use crate::numcore::{Matrix, SeededRng};
use crate::{Error, Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// RBF width; `None` uses `1 / (d · var(X))`.
    pub gamma: Option<f64>,
    /// Passes of `n` stochastic steps each.
    pub epochs: usize,
    /// Pegasos regularisation λ (equivalent to `C = 1 / (λ n)`).
    pub reg: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { gamma: None, epochs: 30, reg: 1e-3, seed: 0 }
    }
}

/// Sigmoid `P(y = +1 | f) = 1 / (1 + exp(A f + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn prob(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// One-vs-rest binary machine: `f(x) = Σⱼ coefⱼ (K(svⱼ, x) + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Matrix,
    /// `αⱼ yⱼ / (λ T)` per support vector.
    pub coef: Vec<f64>,
    pub platt: PlattScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSvmModel {
    pub gamma: f64,
    pub machines: Vec<BinarySvm>,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn rbf_gram(a: &Matrix, b: &Matrix, gamma: f64) -> Matrix {
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            k[(i, j)] = rbf(a.row(i), b.row(j), gamma);
        }
    }
    k
}

/// `1 / (d · var(X))` over all entries, falling back to `1/d` for constant data.
pub fn default_gamma(x: &Matrix) -> f64 {
    let n = x.data().len() as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let d = x.cols() as f64;
    if var > 1e-12 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

/// Kernelized Pegasos on `(K + 1)` with labels ±1. Returns `αⱼ yⱼ / (λ T)`.
pub fn pegasos_binary(gram: &Matrix, yb: &[f64], reg: f64, steps: usize, rng: &mut SeededRng) -> Vec<f64> {
    let n = yb.len();
    let mut alpha = vec![0u64; n];
    // s[i] = Σⱼ αⱼ yⱼ (K[j][i] + 1)
    let mut s = vec![0.0; n];
    for t in 1..=steps {
        let i = rng.below(n);
        let f = s[i] / (reg * t as f64);
        if yb[i] * f < 1.0 {
            alpha[i] += 1;
            for (j, sj) in s.iter_mut().enumerate() {
                *sj += yb[i] * (gram[(i, j)] + 1.0);
            }
        }
    }
    let scale = 1.0 / (reg * steps as f64);
    alpha.iter().zip(yb).map(|(&a, &y)| a as f64 * y * scale).collect()
}

/// Platt calibration by Newton's method with backtracking on smoothed targets.
pub fn platt_fit(dec: &[f64], positive: &[bool]) -> PlattScaling {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();
    let (mut a, mut b) = (0.0, ((n_neg + 1.0) / (n_pos + 1.0)).ln());
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (1.0 + (-z).exp()).ln()
                } else {
                    (ti - 1.0) * z + (1.0 + z.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&f, &ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    PlattScaling { a, b }
}

/// One-vs-rest RBF SVM with Platt-calibrated probabilities.
pub fn svm_fit(x: &Matrix, y: &[usize], cfg: &SvmConfig) -> Result<KernelSvmModel> {
    check_xy(x, y)?;
    if !(cfg.reg > 0.0) || cfg.epochs == 0 {
        return Err(Error::Param("svm needs reg > 0 and epochs >= 1".into()));
    }
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(x));
    if !(gamma > 0.0) {
        return Err(Error::Param(format!("svm gamma must be > 0, got {gamma}")));
    }
    let gram = rbf_gram(x, x, gamma);
    let steps = cfg.epochs * x.rows();
    let machines = (0..N_CLASSES)
        .map(|k| {
            let yb: Vec<f64> = y.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
            // Every class replays the same sampling stream.
            let coef = pegasos_binary(&gram, &yb, cfg.reg, steps, &mut SeededRng::new(cfg.seed));
            let dec: Vec<f64> =
                (0..x.rows()).map(|i| (0..x.rows()).map(|j| coef[j] * (gram[(j, i)] + 1.0)).sum()).collect();
            let positive: Vec<bool> = y.iter().map(|&c| c == k).collect();
            let platt = platt_fit(&dec, &positive);
            let keep: Vec<usize> = (0..coef.len()).filter(|&j| coef[j] != 0.0).collect();
            BinarySvm { support: x.select_rows(&keep), coef: keep.iter().map(|&j| coef[j]).collect(), platt }
        })
        .collect();
    Ok(KernelSvmModel { gamma, machines })
}

/// Raw one-vs-rest decision values, `n × 3`.
pub fn svm_decision(m: &KernelSvmModel, x: &Matrix) -> Result<Matrix> {
    let d = m.machines[0].support.cols();
    if x.cols() != d {
        return Err(Error::Shape(format!("svm expects {d} features, got {}", x.cols())));
    }
    let mut out = Matrix::zeros(x.rows(), N_CLASSES);
    for (k, mach) in m.machines.iter().enumerate() {
        for i in 0..x.rows() {
            out[(i, k)] = mach
                .coef
                .iter()
                .enumerate()
                .map(|(j, c)| c * (rbf(mach.support.row(j), x.row(i), m.gamma) + 1.0))
                .sum();
        }
    }
    Ok(out)
}

/// Per-class Platt probabilities renormalised to sum to 1.
pub fn svm_predict_proba(m: &KernelSvmModel, x: &Matrix) -> Result<Matrix> {
    let dec = svm_decision(m, x)?;
    let mut p = Matrix::zeros(x.rows(), N_CLASSES);
    for i in 0..x.rows() {
        let raw: Vec<f64> = (0..N_CLASSES).map(|k| m.machines[k].platt.prob(dec[(i, k)])).collect();
        let s: f64 = raw.iter().sum();
        for k in 0..N_CLASSES {
            p[(i, k)] = if s > 0.0 { raw[k] / s } else { 1.0 / N_CLASSES as f64 };
        }
    }
    Ok(p)
}
