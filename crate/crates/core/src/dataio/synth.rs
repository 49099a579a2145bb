use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, EmbeddingRecord, Modality, RiskClass};
use crate::numcore::{Matrix, SeededRng};
use crate::{Error, Result, N_CLASSES};

/// Parameters of the complementary-modalities corpus.
///
/// Text separates class 1 from {2, 3} along the first text axis; the image
/// separates class 2 from class 3 along the first image axis, while class 1
/// images are drawn from the class 2 or class 3 image distribution with
/// probability ½ each. Neither modality alone can exceed 2/3 Bayes accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub d_text: usize,
    pub d_image: usize,
    /// Mean offset `a` along the informative axis.
    pub separation: f64,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
    pub labeled_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_per_class: 200, d_text: 768, d_image: 64, separation: 4.0, sigma: 1.0, labeled_fraction: 1.0, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.separation > 0.0) {
            return Err(Error::Param(format!("separation must be > 0, got {}", self.separation)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Param(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.d_text < 2 || self.d_image < 2 {
            return Err(Error::Param(format!(
                "d_text and d_image must be >= 2, got {} and {}",
                self.d_text, self.d_image
            )));
        }
        if !(0.0..=1.0).contains(&self.labeled_fraction) {
            return Err(Error::Param(format!("labeled_fraction must be in [0, 1], got {}", self.labeled_fraction)));
        }
        if self.n_per_class == 0 {
            return Err(Error::Param("n_per_class must be >= 1".into()));
        }
        Ok(())
    }
}

/// Generated corpus plus the ground truth of every record, hidden or not.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: BTreeMap<String, RiskClass>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Corpus> {
    generate_synthetic_with_truth(cfg).map(|s| s.corpus)
}

pub fn generate_synthetic_with_truth(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let a = cfg.separation;
    let n = cfg.n_per_class;

    let mut samples: Vec<(RiskClass, Vec<f64>, Vec<f64>)> = Vec::with_capacity(N_CLASSES * n);
    for class in RiskClass::ALL {
        for _ in 0..n {
            let mut text: Vec<f64> = (0..cfg.d_text).map(|_| cfg.sigma * rng.normal()).collect();
            let mut image: Vec<f64> = (0..cfg.d_image).map(|_| cfg.sigma * rng.normal()).collect();
            text[0] += if class.get() == 1 { a } else { -a };
            image[0] += match class.get() {
                2 => a,
                3 => -a,
                _ => {
                    if rng.bernoulli(0.5) {
                        a
                    } else {
                        -a
                    }
                }
            };
            samples.push((class, text, image));
        }
    }

    // Hide labels per class, exactly round((1 − f)·n) of them.
    let n_hidden = ((1.0 - cfg.labeled_fraction) * n as f64).round() as usize;
    let mut hidden = vec![false; samples.len()];
    for c in 0..N_CLASSES {
        for j in rng.sample_indices(n, n_hidden) {
            hidden[c * n + j] = true;
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);

    let mut truth = BTreeMap::new();
    let mut records = Vec::with_capacity(samples.len());
    for (pos, &idx) in order.iter().enumerate() {
        let (class, text, image) = &samples[idx];
        let id = format!("s{pos:05}");
        truth.insert(id.clone(), *class);
        let label = (!hidden[idx]).then_some(*class);
        records.push(EmbeddingRecord::new(id, label, text.clone(), Some(image.clone())));
    }
    Ok(SyntheticCorpus { corpus: Corpus::new(records, cfg.d_text, cfg.d_image)?, truth })
}

/// Adds i.i.d. N(0, sigma²) noise to one or both modalities.
pub fn perturb_gaussian(c: &Corpus, which: Modality, sigma: f64, rng: &mut SeededRng) -> Result<Corpus> {
    if !(sigma >= 0.0) {
        return Err(Error::Param(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(c.clone());
    }
    let jitter = |v: &mut Vec<f64>, rng: &mut SeededRng| {
        for x in v.iter_mut() {
            *x += sigma * rng.normal();
        }
    };
    Ok(c.map_records(|r| {
        if matches!(which, Modality::Text | Modality::Both) {
            jitter(&mut r.text, rng);
        }
        if matches!(which, Modality::Image | Modality::Both) {
            if let Some(img) = r.image.as_mut() {
                jitter(img, rng);
            }
        }
    }))
}

/// Replaces every image vector with i.i.d. N(0, 1) noise of the same width.
pub fn replace_images_with_noise(c: &Corpus, rng: &mut SeededRng) -> Result<Corpus> {
    if !c.has_images() {
        return Err(Error::Modality("image ablation needs image vectors on every record".into()));
    }
    let noise = Matrix::new(c.len(), c.d_image(), (0..c.len() * c.d_image()).map(|_| rng.normal()).collect())?;
    c.with_modality(Modality::Image, &noise)
}
