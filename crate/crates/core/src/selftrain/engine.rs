use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::decide::{decide_all, ProbabilisticModel, PseudoLabelDecision};
use super::{SelfTrainConfig, Strategy};
use crate::baselines::{BaselineKind, ClassicalPipeline, FeatureView};
use crate::dataio::{Corpus, Origin};
use crate::numcore::SeededRng;
use crate::{Error, Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfidence {
    pub model: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub strategy: Strategy,
    pub unlabeled_in: usize,
    pub consistent: usize,
    pub sampled: usize,
    pub added: usize,
    pub labeled_after: usize,
    pub confidence: Vec<ModelConfidence>,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub labeled: Corpus,
    pub unlabeled: Corpus,
    pub logs: Vec<RoundLog>,
    pub decisions: Vec<PseudoLabelDecision>,
}

impl SelfTrainOutcome {
    /// Records added by self-training.
    pub fn pseudo(&self) -> impl Iterator<Item = &crate::dataio::EmbeddingRecord> {
        self.labeled.records().iter().filter(|r| r.is_pseudo())
    }
}

fn check_inputs(labeled: &Corpus, unlabeled: &Corpus) -> Result<()> {
    let counts = labeled.class_counts();
    if let Some(c) = (0..N_CLASSES).find(|&c| counts[c] == 0) {
        return Err(Error::Stratification(format!(
            "labeled set has no samples of class {}; self-training needs all classes",
            c + 1
        )));
    }
    if !labeled.is_fully_labeled() {
        return Err(Error::Contract("labeled set contains unlabeled records".into()));
    }
    let ids: HashSet<&str> = labeled.records().iter().map(|r| r.id.as_str()).collect();
    if let Some(r) = unlabeled.records().iter().find(|r| ids.contains(r.id.as_str())) {
        return Err(Error::Leakage(format!("unlabeled pool shares id {} with the labeled set", r.id)));
    }
    Ok(())
}

/// SVM, logistic regression and random forest on early-fused features.
pub fn fit_ensemble(labeled: &Corpus, cfg: &SelfTrainConfig, seed: u64) -> Result<Vec<ClassicalPipeline>> {
    let root = SeededRng::new(seed);
    [BaselineKind::Svm, BaselineKind::LogReg, BaselineKind::Forest]
        .iter()
        .map(|&kind| {
            let s = root.derive(&format!("{kind:?}")).next_u64();
            ClassicalPipeline::fit(labeled, FeatureView::Concat, kind, &cfg.baselines, s)
        })
        .collect()
}

fn confidence_summary(decisions: &[PseudoLabelDecision]) -> Vec<ModelConfidence> {
    let Some(first) = decisions.first() else {
        return Vec::new();
    };
    (0..first.votes.len())
        .map(|m| {
            let vals: Vec<f64> = decisions.iter().map(|d| d.votes[m].confidence).collect();
            ModelConfidence {
                model: first.votes[m].model.clone(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Moves the chosen pool records, labeled with their decisions, into `labeled`.
fn transfer(
    labeled: &Corpus,
    unlabeled: &Corpus,
    decisions: &[PseudoLabelDecision],
    chosen: &[usize],
    round: usize,
) -> Result<(Corpus, Corpus)> {
    let mut take = vec![false; unlabeled.len()];
    let mut records = labeled.records().to_vec();
    for &i in chosen {
        take[i] = true;
        let mut r = unlabeled.records()[i].clone();
        r.label = decisions[i].label;
        r.origin = Origin::Pseudo { round };
        records.push(r);
    }
    let rest = (0..unlabeled.len()).filter(|&i| !take[i]).collect::<Vec<_>>();
    let d_image = if labeled.is_empty() { unlabeled.d_image() } else { labeled.d_image() };
    Ok((Corpus::new(records, labeled.d_text(), d_image)?, unlabeled.subset(&rest)))
}

/// One ensemble round with already fitted models.
pub fn run_round_with_models(
    labeled: &Corpus,
    unlabeled: &Corpus,
    models: &[&dyn ProbabilisticModel],
    cfg: &SelfTrainConfig,
    round: usize,
    rng: &mut SeededRng,
) -> Result<(Corpus, Corpus, RoundLog, Vec<PseudoLabelDecision>)> {
    cfg.validate()?;
    let decisions = decide_all(models, unlabeled, cfg.tau, round)?;
    let accepted: Vec<usize> = (0..decisions.len()).filter(|&i| decisions[i].accepted).collect();
    let (mut chosen, sampled) = match cfg.strategy {
        Strategy::EnsembleConsistency => {
            let k = ((cfg.sample_fraction * accepted.len() as f64).ceil() as usize).min(accepted.len());
            let picks = rng.sample_indices(accepted.len(), k);
            (picks.into_iter().map(|j| accepted[j]).collect::<Vec<_>>(), k)
        }
        Strategy::StackingTeacher => (accepted.clone(), accepted.len()),
    };
    chosen.sort_unstable();
    let (labeled2, unlabeled2) = transfer(labeled, unlabeled, &decisions, &chosen, round)?;
    let log = RoundLog {
        round,
        strategy: cfg.strategy,
        unlabeled_in: unlabeled.len(),
        consistent: accepted.len(),
        sampled,
        added: chosen.len(),
        labeled_after: labeled2.len(),
        confidence: confidence_summary(&decisions),
    };
    Ok((labeled2, unlabeled2, log, decisions))
}

/// One round of ensemble consistency filtering with freshly fitted base models.
pub fn run_round_ensemble(
    labeled: &Corpus,
    unlabeled: &Corpus,
    cfg: &SelfTrainConfig,
    round: usize,
    rng: &mut SeededRng,
) -> Result<(Corpus, Corpus, RoundLog, Vec<PseudoLabelDecision>)> {
    check_inputs(labeled, unlabeled)?;
    let cfg = SelfTrainConfig { strategy: Strategy::EnsembleConsistency, ..cfg.clone() };
    let fit_seed = rng.next_u64();
    if unlabeled.is_empty() {
        return run_round_with_models(labeled, unlabeled, &[&NoModel], &cfg, round, rng);
    }
    let models = fit_ensemble(labeled, &cfg, fit_seed)?;
    let refs: Vec<&dyn ProbabilisticModel> = models.iter().map(|m| m as &dyn ProbabilisticModel).collect();
    run_round_with_models(labeled, unlabeled, &refs, &cfg, round, rng)
}

/// One teacher-student round: a stacking model fitted on `labeled` labels every
/// pool record whose top probability exceeds `cfg.tau`.
pub fn stacking_teacher_round(
    labeled: &Corpus,
    unlabeled: &Corpus,
    cfg: &SelfTrainConfig,
    round: usize,
    rng: &mut SeededRng,
) -> Result<(Corpus, Corpus, RoundLog, Vec<PseudoLabelDecision>)> {
    check_inputs(labeled, unlabeled)?;
    let cfg = SelfTrainConfig { strategy: Strategy::StackingTeacher, ..cfg.clone() };
    let fit_seed = rng.next_u64();
    if unlabeled.is_empty() {
        return run_round_with_models(labeled, unlabeled, &[&NoModel], &cfg, round, rng);
    }
    let teacher =
        ClassicalPipeline::fit(labeled, FeatureView::Concat, BaselineKind::Stacking, &cfg.baselines, fit_seed)?;
    run_round_with_models(labeled, unlabeled, &[&teacher], &cfg, round, rng)
}

/// Placeholder for rounds over an empty pool, where nothing is predicted.
struct NoModel;

impl ProbabilisticModel for NoModel {
    fn name(&self) -> String {
        "none".into()
    }

    fn predict_proba(&self, _: &Corpus) -> Result<crate::numcore::Matrix> {
        Err(Error::Contract("empty pools are never scored".into()))
    }
}

/// `cfg.rounds` sequential rounds of the configured strategy.
pub fn run_self_training(
    labeled: &Corpus,
    unlabeled: &Corpus,
    cfg: &SelfTrainConfig,
    rng: &mut SeededRng,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    check_inputs(labeled, unlabeled)?;
    let mut cur_l = labeled.clone();
    let mut cur_u = unlabeled.clone();
    let mut logs = Vec::with_capacity(cfg.rounds);
    let mut decisions = Vec::new();
    for round in 1..=cfg.rounds {
        let (l, u, log, d) = match cfg.strategy {
            Strategy::EnsembleConsistency => run_round_ensemble(&cur_l, &cur_u, cfg, round, rng)?,
            Strategy::StackingTeacher => stacking_teacher_round(&cur_l, &cur_u, cfg, round, rng)?,
        };
        cur_l = l;
        cur_u = u;
        logs.push(log);
        decisions.extend(d);
    }
    Ok(SelfTrainOutcome { labeled: cur_l, unlabeled: cur_u, logs, decisions })
}

/// One JSON object per item and line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("plain data serializes"));
        out.push('\n');
    }
    out
}
