use crate::numcore::{log_sum_exp, Matrix};
use crate::{Error, Result, N_CLASSES};

/// Mean of `−log softmax(logits)[label]` over the batch; labels are class indices.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.cols() != N_CLASSES {
        return Err(Error::Shape(format!("logits have {} columns, expected {N_CLASSES}", logits.cols())));
    }
    if labels.len() != logits.rows() {
        return Err(Error::Shape(format!("{} labels for {} logit rows", labels.len(), logits.rows())));
    }
    if labels.is_empty() {
        return Err(Error::Contract("cross-entropy of an empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &y) in logits.row_iter().zip(labels) {
        if y >= N_CLASSES {
            return Err(Error::Param(format!("class index {y} outside 0..{N_CLASSES}")));
        }
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / labels.len() as f64)
}

/// `CE(labeled) + λ·CE(pseudo)`; an empty part contributes 0.
pub fn combined_loss(
    labeled_logits: &Matrix,
    labeled_y: &[usize],
    pseudo_logits: &Matrix,
    pseudo_y: &[usize],
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Param(format!("lambda must be >= 0, got {lambda}")));
    }
    let part = |logits: &Matrix, y: &[usize]| -> Result<Option<f64>> {
        if y.is_empty() && logits.rows() == 0 {
            Ok(None)
        } else {
            cross_entropy(logits, y).map(Some)
        }
    };
    match (part(labeled_logits, labeled_y)?, part(pseudo_logits, pseudo_y)?) {
        (None, None) => Err(Error::Contract("combined loss with both parts empty".into())),
        (l, p) => Ok(l.unwrap_or(0.0) + lambda * p.unwrap_or(0.0)),
    }
}
