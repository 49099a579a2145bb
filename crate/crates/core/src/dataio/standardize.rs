use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Modality};
use crate::numcore::Matrix;
use crate::{Error, Result};

/// Standard deviation below which a column is treated as constant.
const DEGENERATE_STD: f64 = 1e-12;

/// Per-column population mean/std. Constant columns pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::InsufficientData(format!("standardization needs at least 2 rows, got {}", x.rows())));
        }
        let n = x.rows() as f64;
        let means: Vec<f64> = x.col_sums().into_iter().map(|s| s / n).collect();
        let mut vars = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for ((v, xi), m) in vars.iter_mut().zip(row).zip(&means) {
                *v += (xi - m) * (xi - m);
            }
        }
        let stds = vars.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { means, stds })
    }

    pub fn is_pass_through(&self, j: usize) -> bool {
        self.stds[j] <= DEGENERATE_STD
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::Shape(format!("scaler fitted on {} columns applied to {}", self.means.len(), x.cols())));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                if !self.is_pass_through(j) {
                    *v = (*v - self.means[j]) / self.stds[j];
                }
            }
        }
        Ok(out)
    }
}

/// Standardizer over one or both modality blocks of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub which: Modality,
    pub text: Option<ColumnScaler>,
    pub image: Option<ColumnScaler>,
}

impl Standardizer {
    /// Means over `[text | image]` for the fitted blocks.
    pub fn means(&self) -> Vec<f64> {
        self.blocks().flat_map(|s| s.means.iter().copied()).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.blocks().flat_map(|s| s.stds.iter().copied()).collect()
    }

    fn blocks(&self) -> impl Iterator<Item = &ColumnScaler> {
        self.text.iter().chain(self.image.iter())
    }
}

pub fn standardize_fit(c: &Corpus, which: Modality) -> Result<Standardizer> {
    if c.len() < 2 {
        return Err(Error::InsufficientData(format!("standardization needs at least 2 records, got {}", c.len())));
    }
    let text = match which {
        Modality::Text | Modality::Both => Some(ColumnScaler::fit(&c.text_matrix())?),
        Modality::Image => None,
    };
    let image = match which {
        Modality::Image | Modality::Both => Some(ColumnScaler::fit(&c.require_images().image_matrix()?)?),
        Modality::Text => None,
    };
    Ok(Standardizer { which, text, image })
}

pub fn standardize_apply(s: &Standardizer, c: &Corpus) -> Result<Corpus> {
    let mut out = c.clone();
    if let Some(t) = &s.text {
        out = out.with_modality(Modality::Text, &t.apply(&c.text_matrix())?)?;
    }
    if let Some(sc) = &s.image {
        if sc.means.len() != c.d_image() {
            return Err(Error::Shape(format!(
                "image scaler has {} columns, corpus d_I is {}",
                sc.means.len(),
                c.d_image()
            )));
        }
        out = out.map_records(|r| {
            if let Some(img) = r.image.as_mut() {
                for (j, v) in img.iter_mut().enumerate() {
                    if !sc.is_pass_through(j) {
                        *v = (*v - sc.means[j]) / sc.stds[j];
                    }
                }
            }
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::EmbeddingRecord;
    use crate::numcore::SeededRng;

    fn corpus(text: &[Vec<f64>]) -> Corpus {
        let records = text
            .iter()
            .enumerate()
            .map(|(i, t)| EmbeddingRecord::new(format!("r{i}"), None, t.clone(), Some(vec![1.0])))
            .collect();
        Corpus::new(records, text[0].len(), 1).unwrap()
    }

    #[test]
    fn two_point_column() {
        let s = standardize_fit(&corpus(&[vec![1.0], vec![3.0]]), Modality::Text).unwrap();
        assert_eq!(s.means(), vec![2.0]);
        assert_eq!(s.stds(), vec![1.0]);
    }

    #[test]
    fn constant_column_passes_through() {
        let c = corpus(&[vec![5.0, 1.0], vec![5.0, 2.0]]);
        let s = standardize_fit(&c, Modality::Both).unwrap();
        assert_eq!(s.text.as_ref().unwrap().stds[0], 0.0);
        assert!(s.text.as_ref().unwrap().is_pass_through(0));
        let out = standardize_apply(&s, &c).unwrap();
        assert_eq!(out.records()[0].text[0], 5.0);
        assert_eq!(out.records()[0].image, Some(vec![1.0]));
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(standardize_fit(&corpus(&[vec![1.0]]), Modality::Text), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn identity_and_single_record_formula() {
        let c = corpus(&[vec![1.0, -2.0]]);
        let id = Standardizer {
            which: Modality::Text,
            text: Some(ColumnScaler { means: vec![0.0, 0.0], stds: vec![1.0, 1.0] }),
            image: None,
        };
        assert_eq!(standardize_apply(&id, &c).unwrap(), c);
        let s = Standardizer {
            which: Modality::Text,
            text: Some(ColumnScaler { means: vec![1.0, 2.0], stds: vec![2.0, 4.0] }),
            image: None,
        };
        assert_eq!(standardize_apply(&s, &c).unwrap().records()[0].text, vec![0.0, -1.0]);
        let bad = Standardizer {
            which: Modality::Text,
            text: Some(ColumnScaler { means: vec![1.0], stds: vec![2.0] }),
            image: None,
        };
        assert!(matches!(standardize_apply(&bad, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn refit_after_apply_is_standard() {
        let mut rng = SeededRng::new(4);
        let rows: Vec<Vec<f64>> =
            (0..50).map(|_| (0..8).map(|j| 3.0 * j as f64 + (j as f64 + 1.0) * rng.normal()).collect()).collect();
        let c = corpus(&rows);
        let s = standardize_fit(&c, Modality::Text).unwrap();
        let out = standardize_apply(&s, &c).unwrap();
        let again = standardize_fit(&out, Modality::Text).unwrap();
        for (m, sd) in again.means().iter().zip(again.stds()) {
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }
}
