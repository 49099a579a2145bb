use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Modality};
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Principal axes of one modality block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub which: Modality,
    /// k × d, orthonormal rows, first nonzero entry of each row positive.
    pub components: Matrix,
    /// Sample-covariance eigenvalues, descending.
    pub explained_variance: Vec<f64>,
    pub mean: Vec<f64>,
}

fn block(c: &Corpus, which: Modality) -> Result<Matrix> {
    match which {
        Modality::Text => Ok(c.text_matrix()),
        Modality::Image => c.image_matrix(),
        Modality::Both => Err(Error::Param("PCA is fitted on a single modality".into())),
    }
}

/// Sample covariance (divisor n − 1) of mean-centred rows.
pub(crate) fn covariance(x: &Matrix, mean: &[f64]) -> Matrix {
    let d = x.cols();
    let mut cov = Matrix::zeros(d, d);
    for row in x.row_iter() {
        for a in 0..d {
            let da = row[a] - mean[a];
            if da == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (x.rows() - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

pub fn pca_fit(c: &Corpus, which: Modality, k: usize) -> Result<PcaModel> {
    let x = block(c, which)?;
    let d = x.cols();
    if k == 0 || k > d {
        return Err(Error::Param(format!("PCA k={k} must be in 1..={d}")));
    }
    if x.rows() < k + 1 {
        return Err(Error::InsufficientData(format!(
            "PCA with k={k} needs at least {} records, got {}",
            k + 1,
            x.rows()
        )));
    }
    let n = x.rows() as f64;
    let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / n).collect();
    let cov = covariance(&x, &mean);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, cov.data()));

    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort: equal eigenvalues keep nalgebra's order.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Matrix::zeros(k, d);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let sign = v.iter().find(|x| x.abs() > 1e-12).map_or(1.0, |x| x.signum());
        for j in 0..d {
            components[(row, j)] = sign * v[j];
        }
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel { which, components, explained_variance, mean })
}

/// Projects one modality onto the first k axes.
pub fn pca_transform(p: &PcaModel, c: &Corpus) -> Result<Corpus> {
    let x = block(c, p.which)?;
    if x.cols() != p.mean.len() {
        return Err(Error::Shape(format!("PCA fitted on {} columns applied to {}", p.mean.len(), x.cols())));
    }
    let mut centred = x;
    for i in 0..centred.rows() {
        for (v, m) in centred.row_mut(i).iter_mut().zip(&p.mean) {
            *v -= m;
        }
    }
    let projected = centred.matmul_t(&p.components)?;
    c.with_modality(p.which, &projected)
}
