use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineModel, ClassicalPipeline};
use crate::dataio::{Corpus, EmbeddingRecord, RiskClass};
use crate::numcore::{argmax, Matrix};
use crate::{Error, Result, N_CLASSES};

/// A fitted model producing class probabilities for whole corpora.
pub trait ProbabilisticModel: Send + Sync {
    fn name(&self) -> String;
    fn predict_proba(&self, c: &Corpus) -> Result<Matrix>;
}

impl ProbabilisticModel for ClassicalPipeline {
    fn name(&self) -> String {
        match self.model {
            BaselineModel::LogReg(_) => "logreg",
            BaselineModel::Svm(_) => "svm",
            BaselineModel::Forest(_) => "forest",
            BaselineModel::Stacking(_) => "stacking",
        }
        .to_string()
    }

    fn predict_proba(&self, c: &Corpus) -> Result<Matrix> {
        ClassicalPipeline::predict_proba(self, c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVote {
    pub model: String,
    pub class: RiskClass,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelDecision {
    pub id: String,
    pub round: usize,
    pub votes: Vec<ModelVote>,
    pub mean_confidence: f64,
    pub unanimous: bool,
    pub accepted: bool,
    /// Present exactly when accepted.
    pub label: Option<RiskClass>,
}

/// Consistency rule on per-model probability rows: accept when every model
/// picks the same class and the mean top probability strictly exceeds `tau`.
pub fn decide_from_probs(id: &str, models: &[(String, &[f64])], tau: f64, round: usize) -> Result<PseudoLabelDecision> {
    if models.is_empty() {
        return Err(Error::Contract("pseudo-label decision needs at least one fitted model".into()));
    }
    let mut votes = Vec::with_capacity(models.len());
    for (name, row) in models {
        if row.len() != N_CLASSES {
            return Err(Error::Shape(format!("{name} returned {} probabilities", row.len())));
        }
        let k = argmax(row);
        votes.push(ModelVote { model: name.clone(), class: RiskClass::from_index(k)?, confidence: row[k] });
    }
    let mean_confidence = votes.iter().map(|v| v.confidence).sum::<f64>() / votes.len() as f64;
    let unanimous = votes.iter().all(|v| v.class == votes[0].class);
    let accepted = unanimous && mean_confidence > tau;
    Ok(PseudoLabelDecision {
        id: id.to_string(),
        round,
        label: accepted.then_some(votes[0].class),
        votes,
        mean_confidence,
        unanimous,
        accepted,
    })
}

/// Decides every record of `pool` against the fitted models.
pub fn decide_all(
    models: &[&dyn ProbabilisticModel],
    pool: &Corpus,
    tau: f64,
    round: usize,
) -> Result<Vec<PseudoLabelDecision>> {
    if models.is_empty() {
        return Err(Error::Contract("pseudo-label decision needs at least one fitted model".into()));
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let probs = models.par_iter().map(|m| m.predict_proba(pool).map(|p| (m.name(), p))).collect::<Result<Vec<_>>>()?;
    for (name, p) in &probs {
        if p.rows() != pool.len() {
            return Err(Error::Shape(format!("{name} returned {} rows for {} records", p.rows(), pool.len())));
        }
    }
    pool.records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let rows: Vec<(String, &[f64])> = probs.iter().map(|(n, p)| (n.clone(), p.row(i))).collect();
            decide_from_probs(&r.id, &rows, tau, round)
        })
        .collect()
}

/// Decision for a single record.
pub fn ensemble_decide(
    models: &[&dyn ProbabilisticModel],
    sample: &EmbeddingRecord,
    d_text: usize,
    d_image: usize,
    tau: f64,
    round: usize,
) -> Result<PseudoLabelDecision> {
    let one = Corpus::new(vec![sample.clone()], d_text, d_image)?;
    decide_all(models, &one, tau, round).map(|mut v| v.remove(0))
}
