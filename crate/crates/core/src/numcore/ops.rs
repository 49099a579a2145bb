use super::{Matrix, SeededRng};
use crate::{Error, Result};

/// √(2/π), the GELU tanh-approximation constant.
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// `log Σ exp(row)` computed stably.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// GELU, tanh approximation: `0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

/// Derivative of [`gelu_scalar`].
pub fn gelu_grad_scalar(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

pub fn gelu(m: &Matrix) -> Matrix {
    m.map(gelu_scalar)
}

/// Per-row normalisation statistics kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    /// Pre-affine normalised values.
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm(m: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix> {
    layer_norm_cached(m, gamma, beta, eps).map(|(y, _)| y)
}

pub fn layer_norm_cached(m: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<(Matrix, LayerNormCache)> {
    if gamma.len() != m.cols() || beta.len() != m.cols() {
        return Err(Error::Shape(format!(
            "layer_norm gamma/beta of length {}/{} for {} columns",
            gamma.len(),
            beta.len(),
            m.cols()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::Param(format!("layer_norm eps must be > 0, got {eps}")));
    }
    let n = m.cols() as f64;
    let mut xhat = Matrix::zeros(m.rows(), m.cols());
    let mut y = Matrix::zeros(m.rows(), m.cols());
    let mut inv_std = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..m.cols() {
            let h = (row[j] - mean) * is;
            xhat[(i, j)] = h;
            y[(i, j)] = gamma[j] * h + beta[j];
        }
    }
    Ok((y, LayerNormCache { xhat, inv_std }))
}

/// Backward pass of layer norm. Accumulates into `dgamma`/`dbeta` and returns
/// the input gradient.
pub fn layer_norm_backward(
    dy: &Matrix,
    cache: &LayerNormCache,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Matrix {
    let n = dy.cols() as f64;
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for i in 0..dy.rows() {
        let dyr = dy.row(i);
        let xh = cache.xhat.row(i);
        let mut sum_dxh = 0.0;
        let mut sum_dxh_xh = 0.0;
        for j in 0..dy.cols() {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            let dxh = dyr[j] * gamma[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[j];
        }
        let is = cache.inv_std[i];
        let out = dx.row_mut(i);
        for j in 0..out.len() {
            let dxh = dyr[j] * gamma[j];
            out[j] = is / n * (n * dxh - sum_dxh - xh[j] * sum_dxh_xh);
        }
    }
    dx
}

/// Central-difference gradient `(f(θ+heᵢ) − f(θ−heᵢ)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h <= 0.0 {
        return Err(Error::Param(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        point[i] = theta[i] + h;
        let plus = f(&point);
        point[i] = theta[i] - h;
        let minus = f(&point);
        point[i] = theta[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Evaluation(format!("non-finite function value at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Glorot-uniform matrix on `[−√(6/(rows+cols)), √(6/(rows+cols))]`.
pub fn xavier_init(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let bound = xavier_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Matrix::new(rows, cols, data).expect("length matches by construction")
}

pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v]).unwrap()
    }

    #[test]
    fn softmax_uniform_row() {
        let s = softmax_rows(&row(&[0.0, 0.0, 0.0]));
        for &p in s.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let s = softmax_rows(&row(&[1000.0, 0.0]));
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(s[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_formula() {
        let s = softmax_rows(&row(&[1.0, 2.0, 3.0]));
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for (j, x) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((s[(0, j)] - x.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        let x = 1.0f64;
        let oracle = 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
        assert!((gelu_scalar(1.0) - oracle).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        for &x in &[-3.0, -1.0, -0.2, 0.0, 0.5, 2.0] {
            let g = finite_diff_grad(|t| gelu_scalar(t[0]), &[x], 1e-5).unwrap();
            assert!((g[0] - gelu_grad_scalar(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_cases() {
        let ones = [1.0, 1.0];
        let zeros = [0.0, 0.0];
        let y = layer_norm(&row(&[5.0, 5.0]), &ones, &zeros, 1e-5).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);

        // var = 1 → xhat = ±1/√(1+eps)
        let y = layer_norm(&row(&[1.0, 3.0]), &ones, &zeros, 1e-5).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[(0, 0)] + expect).abs() < 1e-12);
        assert!((y[(0, 1)] - 1.0).abs() < 1e-4);

        let y = layer_norm(&row(&[1.0, 3.0]), &zeros, &[0.5, -2.0], 1e-5).unwrap();
        assert_eq!(y.data(), &[0.5, -2.0]);

        assert!(matches!(layer_norm(&row(&[1.0, 3.0]), &[1.0], &zeros, 1e-5), Err(Error::Shape(_))));
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let mut rng = SeededRng::new(5);
        let x: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let gamma: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let beta: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let weights: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
        let loss = |xs: &[f64]| {
            let m = Matrix::new(3, 4, xs.to_vec()).unwrap();
            let y = layer_norm(&m, &gamma, &beta, 1e-5).unwrap();
            y.data().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let m = Matrix::new(3, 4, x.clone()).unwrap();
        let (_, cache) = layer_norm_cached(&m, &gamma, &beta, 1e-5).unwrap();
        let dy = Matrix::new(3, 4, weights.clone()).unwrap();
        let mut dg = vec![0.0; 4];
        let mut db = vec![0.0; 4];
        let dx = layer_norm_backward(&dy, &cache, &gamma, &mut dg, &mut db);
        let num = finite_diff_grad(loss, &x, 1e-5).unwrap();
        for (a, n) in dx.data().iter().zip(&num) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
    }

    #[test]
    fn finite_diff_cases() {
        let g = finite_diff_grad(|t| t.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let g = finite_diff_grad(|_| 3.0, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_diff_grad(|t| t[0].sin(), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 0.0f64.cos()).abs() < 1e-8);
        assert!(finite_diff_grad(|t| 1.0 / t[0], &[1e-6], 1e-5).is_ok());
        assert!(matches!(
            finite_diff_grad(|t| if t[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-5),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn xavier_is_deterministic_and_bounded() {
        let a = xavier_init(20, 30, &mut SeededRng::new(9));
        let b = xavier_init(20, 30, &mut SeededRng::new(9));
        assert_eq!(a, b);
        let big = xavier_init(1000, 1000, &mut SeededRng::new(1));
        let bound = xavier_bound(1000, 1000);
        assert!(big.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn xavier_mean_within_three_sigma() {
        let m = xavier_init(100, 100, &mut SeededRng::new(2));
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        // Uniform(−b, b) has σ = b/√3.
        let sigma = xavier_bound(100, 100) / 3f64.sqrt() / n.sqrt();
        assert!(mean.abs() < 3.0 * sigma);
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-1e4f64..1e4, 1..12)) {
            let s = softmax_rows(&row(&v));
            let sum: f64 = s.data().iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-9);
        }

        #[test]
        fn layer_norm_standardizes(v in proptest::collection::vec(-100f64..100.0, 2..16)) {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            proptest::prop_assume!(var >= 1e-6);
            let ones = vec![1.0; v.len()];
            let zeros = vec![0.0; v.len()];
            let (_, cache) = layer_norm_cached(&row(&v), &ones, &zeros, 1e-5).unwrap();
            let xh = cache.xhat.row(0);
            let m = xh.iter().sum::<f64>() / n;
            let var_h = xh.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            proptest::prop_assert!(m.abs() < 1e-6);
            // eps shrinks the variance by var/(var+eps); at var=1e-6 that is 1e-6/1.1e-5.
            proptest::prop_assert!((var_h - var / (var + 1e-5)).abs() < 1e-3);
            if var >= 1e-2 {
                proptest::prop_assert!((var_h - 1.0).abs() < 1e-3);
            }
        }

        #[test]
        fn finite_diff_matches_quadratic(
            a in proptest::collection::vec(-3f64..3.0, 1..6),
            x in proptest::collection::vec(-3f64..3.0, 6),
        ) {
            let x = &x[..a.len()];
            let f = |t: &[f64]| t.iter().zip(&a).map(|(ti, ai)| ai * ti * ti + ti).sum::<f64>();
            let g = finite_diff_grad(f, x, 1e-5).unwrap();
            for i in 0..a.len() {
                proptest::prop_assert!((g[i] - (2.0 * a[i] * x[i] + 1.0)).abs() < 1e-6);
            }
        }
    }
}
