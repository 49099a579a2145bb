use serde::{Deserialize, Serialize};

use crate::numcore::SeededRng;
use crate::{Error, Result, N_CLASSES};

/// Assignment of every sample to one of `k` validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    /// Validation fold of each sample.
    pub fold_of: Vec<usize>,
}

impl FoldSplit {
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    /// `(train, validation)` index lists, fold by fold.
    pub fn folds(&self) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> + '_ {
        (0..self.k).map(|f| (self.train(f), self.validation(f)))
    }
}

/// Per-class seeded shuffle followed by round-robin fold assignment.
///
/// Classes are visited in order of first appearance and each class's shuffle
/// stream is keyed by the position of its first member, so relabeling the
/// classes does not change the split.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Param(format!("k must be >= 2, got {k}")));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= N_CLASSES) {
        return Err(Error::Param(format!("class index {bad} outside 0..{N_CLASSES}")));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    let mut first_seen = Vec::new();
    for (i, &c) in labels.iter().enumerate() {
        if members[c].is_empty() {
            first_seen.push(c);
        }
        members[c].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < k {
            return Err(Error::Stratification(format!("class {} has {} samples, fewer than k = {k}", c + 1, m.len())));
        }
    }
    let root = SeededRng::new(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0usize;
    for c in first_seen {
        let mut idx = members[c].clone();
        root.derive_indexed("stratum", idx[0] as u64).shuffle(&mut idx);
        for i in idx {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldSplit { k, seed, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(counts: [usize; 3]) -> Vec<usize> {
        let mut v = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            v.extend(std::iter::repeat_n(c, n));
        }
        v
    }

    fn fold_counts(s: &FoldSplit, y: &[usize], f: usize) -> [usize; 3] {
        let mut c = [0; 3];
        for i in s.validation(f) {
            c[y[i]] += 1;
        }
        c
    }

    #[test]
    fn exact_divisibility() {
        let y = labels([9, 3, 3]);
        let s = stratified_kfold(&y, 3, 1).unwrap();
        for f in 0..3 {
            assert_eq!(fold_counts(&s, &y, f), [3, 1, 1]);
        }
    }

    #[test]
    fn uneven_counts_within_one_of_proportional() {
        let y = labels([10, 7, 5]);
        let s = stratified_kfold(&y, 5, 2).unwrap();
        let expect = [2.0, 1.4, 1.0];
        let mut covered = vec![false; y.len()];
        for f in 0..5 {
            let c = fold_counts(&s, &y, f);
            for k in 0..3 {
                assert!((c[k] as f64 - expect[k]).abs() <= 1.0);
            }
            for i in s.validation(f) {
                assert!(!covered[i]);
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&b| b));
    }

    #[test]
    fn small_class_is_named() {
        let err = stratified_kfold(&labels([5, 5, 2]), 3, 0).unwrap_err();
        assert!(matches!(&err, Error::Stratification(m) if m.contains("class 3")));
    }

    #[test]
    fn invariant_under_relabeling() {
        let mut rng = SeededRng::new(4);
        let y: Vec<usize> = (0..60).map(|_| rng.below(3)).collect();
        let perm = [2, 0, 1];
        let y2: Vec<usize> = y.iter().map(|&c| perm[c]).collect();
        assert_eq!(stratified_kfold(&y, 5, 9).unwrap().fold_of, stratified_kfold(&y2, 5, 9).unwrap().fold_of);
    }

    proptest! {
        #[test]
        fn folds_partition_and_stay_proportional(a in 5usize..40, b in 5usize..40, c in 5usize..40, k in 2usize..6, seed in 0u64..1000) {
            let y = labels([a, b, c]);
            let s = stratified_kfold(&y, k, seed).unwrap();
            let n = y.len();
            let mut seen = vec![0; n];
            for f in 0..k {
                let counts = fold_counts(&s, &y, f);
                for (cls, &tot) in [a, b, c].iter().enumerate() {
                    prop_assert!((counts[cls] as f64 - tot as f64 / k as f64).abs() <= 1.0);
                }
                for i in s.validation(f) { seen[i] += 1; }
                let tr = s.train(f);
                prop_assert_eq!(tr.len() + s.validation(f).len(), n);
            }
            prop_assert!(seen.iter().all(|&v| v == 1));
        }
    }
}
