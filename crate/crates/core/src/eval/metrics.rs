use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::{Error, Result, N_CLASSES};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], pred: &[usize]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= N_CLASSES || p >= N_CLASSES {
                return Err(Error::Param(format!("class index outside 0..{N_CLASSES}: ({t}, {p})")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..N_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..N_CLASSES {
            for j in 0..N_CLASSES {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Macro-averaged precision, recall and F1 with per-class detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: [ClassScores; N_CLASSES],
    /// Set when some precision or recall was 0/0 and defined as 0.
    pub zero_division: bool,
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Evaluation("empty confusion matrix".into()));
    }
    Ok(cm.trace() as f64 / n as f64)
}

pub fn macro_prf(cm: &ConfusionMatrix) -> Result<MacroPrf> {
    if cm.total() == 0 {
        return Err(Error::Evaluation("empty confusion matrix".into()));
    }
    let mut per_class = [ClassScores::default(); N_CLASSES];
    let mut zero_division = false;
    let ratio = |num: usize, den: usize, flag: &mut bool| {
        if den == 0 {
            *flag = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    for (c, s) in per_class.iter_mut().enumerate() {
        let tp = cm.counts[c][c];
        let predicted: usize = (0..N_CLASSES).map(|t| cm.counts[t][c]).sum();
        let actual: usize = cm.counts[c].iter().sum();
        s.precision = ratio(tp, predicted, &mut zero_division);
        s.recall = ratio(tp, actual, &mut zero_division);
        s.f1 = if s.precision + s.recall > 0.0 { 2.0 * s.precision * s.recall / (s.precision + s.recall) } else { 0.0 };
        s.support = actual;
    }
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
    Ok(MacroPrf {
        precision: mean(|s| s.precision),
        recall: mean(|s| s.recall),
        f1: mean(|s| s.f1),
        per_class,
        zero_division,
    })
}

/// Mann-Whitney AUROC of `scores` for the positive set, with midranks for ties.
/// `None` when either side is empty.
pub fn auroc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest AUROC per class, `None` where the class is absent or universal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocSummary {
    pub macro_auroc: f64,
    pub per_class: [Option<f64>; N_CLASSES],
}

pub fn auroc_ovr_detail(probs: &Matrix, truth: &[usize]) -> Result<AurocSummary> {
    if probs.rows() != truth.len() || probs.cols() != N_CLASSES {
        return Err(Error::Shape(format!("probabilities {:?} for {} labels", probs.shape(), truth.len())));
    }
    let mut per_class = [None; N_CLASSES];
    for (c, slot) in per_class.iter_mut().enumerate() {
        let col: Vec<f64> = (0..probs.rows()).map(|i| probs.row(i)[c]).collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        *slot = auroc_binary(&col, &pos);
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::MetricUndefined("AUROC needs at least two classes in the truth".into()));
    }
    Ok(AurocSummary { macro_auroc: defined.iter().sum::<f64>() / defined.len() as f64, per_class })
}

/// Macro one-vs-rest AUROC over the classes with both outcomes present.
pub fn auroc_ovr(probs: &Matrix, truth: &[usize]) -> Result<f64> {
    auroc_ovr_detail(probs, truth).map(|s| s.macro_auroc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeededRng;
    use proptest::prelude::*;

    fn pair_count(scores: &[f64], pos: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if pos[i] && !pos[j] {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn reference_vectors() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.75);
        assert!((macro_prf(&cm).unwrap().f1 - 7.0 / 9.0).abs() < 1e-12);
        let a = auroc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((a - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let y = [0, 1, 2, 0, 1, 2];
        let cm = ConfusionMatrix::from_predictions(&y, &y).unwrap();
        let m = macro_prf(&cm).unwrap();
        assert_eq!((accuracy(&cm).unwrap(), m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let cm = ConfusionMatrix::from_predictions(&y, &[0; 6]).unwrap();
        let m = macro_prf(&cm).unwrap();
        assert!((accuracy(&cm).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!(m.zero_division);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let cm = ConfusionMatrix::default();
        assert!(accuracy(&cm).is_err());
        assert!(macro_prf(&cm).is_err());
    }

    #[test]
    fn ties_and_perfect_ranking() {
        assert_eq!(auroc_binary(&[0.5; 6], &[true, false, true, false, true, false]), Some(0.5));
        assert_eq!(auroc_binary(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auroc_binary(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn single_class_truth_is_undefined() {
        let p = Matrix::filled(4, 3, 1.0 / 3.0);
        assert!(matches!(auroc_ovr(&p, &[1, 1, 1, 1]), Err(Error::MetricUndefined(_))));
        let s = auroc_ovr_detail(&p, &[1, 1, 0, 0]).unwrap();
        assert_eq!(s.per_class[2], None);
        assert_eq!(s.macro_auroc, 0.5);
    }

    #[test]
    fn random_scores_are_near_chance() {
        let mut rng = SeededRng::new(3);
        let n = 10_000;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.next_f64()).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
        let a = auroc_ovr(&Matrix::new(n, 3, data).unwrap(), &truth).unwrap();
        assert!((0.45..=0.55).contains(&a), "{a}");
    }

    proptest! {
        #[test]
        fn rank_statistic_matches_pair_count(v in prop::collection::vec((0u8..8, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = v.iter().map(|p| p.0 as f64 / 8.0).collect();
            let pos: Vec<bool> = v.iter().map(|p| p.1).collect();
            if let Some(a) = auroc_binary(&scores, &pos) {
                prop_assert!((a - pair_count(&scores, &pos)).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_transform_invariance(v in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = v.iter().map(|p| p.0).collect();
            let pos: Vec<bool> = v.iter().map(|p| p.1).collect();
            let warped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auroc_binary(&scores, &pos), auroc_binary(&warped, &pos));
        }

        #[test]
        fn accuracy_is_one_minus_off_diagonal(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let cm = ConfusionMatrix::from_predictions(&t, &p).unwrap();
            let off: usize = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| cm.counts[i][j]).sum();
            prop_assert!((accuracy(&cm).unwrap() - (1.0 - off as f64 / cm.total() as f64)).abs() <= f64::EPSILON);
            let m = macro_prf(&cm).unwrap();
            for x in [m.precision, m.recall, m.f1] { prop_assert!((0.0..=1.0).contains(&x)); }
        }
    }
}
