use crate::dataio::{Corpus, EmbeddingRecord};
use crate::numcore::{Matrix, SeededRng};
use crate::{Error, Result, N_CLASSES};

/// Upsamples minority classes with replacement until every present class
/// matches the majority count. Copies get ids `{id}#os{k}`.
pub fn oversample(labeled: &Corpus, rng: &mut SeededRng) -> Result<Corpus> {
    if labeled.is_empty() {
        return Err(Error::InsufficientData("cannot oversample an empty corpus".into()));
    }
    let y = labeled.class_indices()?;
    let counts = labeled.class_counts();
    let majority = counts.iter().copied().max().unwrap_or(0);
    let mut records: Vec<EmbeddingRecord> = labeled.records().to_vec();
    let mut copies = 0usize;
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        for _ in count..majority {
            let src = &labeled.records()[members[rng.below(members.len())]];
            let mut dup = src.clone();
            dup.id = format!("{}#os{copies}", src.id);
            copies += 1;
            records.push(dup);
        }
    }
    Corpus::new(records, labeled.d_text(), labeled.d_image())
}

fn jitter_and_mask(m: &Matrix, sigma: f64, p: f64, rng: &mut SeededRng) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    m.map(|x| {
        let mut v = x;
        if sigma > 0.0 {
            v += sigma * rng.normal();
        }
        if p > 0.0 {
            v = if rng.bernoulli(p) { 0.0 } else { v * keep };
        }
        v
    })
}

/// Gaussian jitter followed by inverted-scaled Bernoulli feature masking.
pub fn augment(
    text: &Matrix,
    image: &Matrix,
    aug_sigma: f64,
    dropout_p: f64,
    rng: &mut SeededRng,
) -> Result<(Matrix, Matrix)> {
    if !(aug_sigma >= 0.0) {
        return Err(Error::Param(format!("aug_sigma must be >= 0, got {aug_sigma}")));
    }
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(Error::Param(format!("dropout_p must be in [0, 1), got {dropout_p}")));
    }
    Ok((jitter_and_mask(text, aug_sigma, dropout_p, rng), jitter_and_mask(image, aug_sigma, dropout_p, rng)))
}

/// Stratified holdout: `round(fraction·n_c)` records per class, at least one,
/// leaving at least one for training. Returns `(train, holdout)`.
pub fn stratified_holdout(c: &Corpus, fraction: f64, rng: &mut SeededRng) -> Result<(Corpus, Corpus)> {
    let y = c.class_indices()?;
    let mut hold = vec![false; c.len()];
    for class in 0..N_CLASSES {
        let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {} has {} labeled samples; at least 2 are needed to hold one out",
                class + 1,
                members.len()
            )));
        }
        let k = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        for j in rng.sample_indices(members.len(), k) {
            hold[members[j]] = true;
        }
    }
    let (tr, va): (Vec<usize>, Vec<usize>) = (0..c.len()).partition(|&i| !hold[i]);
    Ok((c.subset(&tr), c.subset(&va)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::RiskClass;
    use std::collections::HashMap;

    fn corpus(counts: [usize; 3]) -> Corpus {
        let mut recs = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                recs.push(EmbeddingRecord::new(
                    format!("c{c}_{i}"),
                    Some(RiskClass::from_index(c).unwrap()),
                    vec![c as f64, i as f64],
                    Some(vec![1.0]),
                ));
            }
        }
        Corpus::new(recs, 2, 1).unwrap()
    }

    #[test]
    fn oversample_balances() {
        let out = oversample(&corpus([10, 5, 5]), &mut SeededRng::new(1)).unwrap();
        assert_eq!(out.class_counts(), [10, 10, 10]);
    }

    #[test]
    fn oversample_balanced_is_identity_up_to_order() {
        let c = corpus([4, 4, 4]);
        let out = oversample(&c, &mut SeededRng::new(1)).unwrap();
        assert_eq!(out.ids(), c.ids());
    }

    #[test]
    fn oversample_contains_input_and_duplicates_only() {
        let c = corpus([7, 2, 4]);
        let out = oversample(&c, &mut SeededRng::new(3)).unwrap();
        let orig: HashMap<&str, &EmbeddingRecord> = c.records().iter().map(|r| (r.id.as_str(), r)).collect();
        for r in c.records() {
            assert!(out.records().contains(r));
        }
        for r in out.records().iter().filter(|r| !orig.contains_key(r.id.as_str())) {
            let (base, _) = r.id.split_once("#os").unwrap();
            let src = orig[base];
            assert_eq!((&src.text, &src.image, src.label), (&r.text, &r.image, r.label));
        }
        assert!(oversample(&Corpus::empty(2, 1), &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn augment_identity_and_determinism() {
        let mut rng = SeededRng::new(2);
        let t = Matrix::new(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let i = Matrix::new(3, 2, (0..6).map(|_| rng.normal()).collect()).unwrap();
        let (a, b) = augment(&t, &i, 0.0, 0.0, &mut SeededRng::new(0)).unwrap();
        assert_eq!((a, b), (t.clone(), i.clone()));
        let x = augment(&t, &i, 0.1, 0.3, &mut SeededRng::new(5)).unwrap();
        let y = augment(&t, &i, 0.1, 0.3, &mut SeededRng::new(5)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn augment_masks_about_half() {
        let t = Matrix::filled(100, 100, 1.0);
        let i = Matrix::filled(1, 1, 1.0);
        let (a, _) = augment(&t, &i, 0.0, 0.5, &mut SeededRng::new(11)).unwrap();
        let zeros = a.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e4;
        assert!((zeros - 0.5).abs() < 0.05, "{zeros}");
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn holdout_is_stratified() {
        let c = corpus([20, 10, 3]);
        let (tr, va) = stratified_holdout(&c, 0.1, &mut SeededRng::new(4)).unwrap();
        assert_eq!(va.class_counts(), [2, 1, 1]);
        assert_eq!(tr.len() + va.len(), c.len());
        assert!(tr.ids().is_disjoint(&va.ids()));
        assert!(matches!(
            stratified_holdout(&corpus([5, 5, 0]), 0.1, &mut SeededRng::new(4)),
            Err(Error::Stratification(_))
        ));
    }
}
