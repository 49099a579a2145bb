use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auroc_ovr_detail, macro_prf, ClassScores, ConfusionMatrix};
use super::split::stratified_kfold;
use crate::baselines::{BaselineConfig, BaselineKind, ClassicalPipeline, FeatureView};
use crate::dataio::{
    replace_images_with_noise, standardize_apply, standardize_fit, Corpus, Modality, RiskClass, Standardizer,
};
use crate::fusion::{init_model, ArchConfig, FusionModel};
use crate::numcore::{Matrix, SeededRng};
use crate::selftrain::{run_self_training, ProbabilisticModel, PseudoLabelDecision, RoundLog, SelfTrainConfig};
use crate::train::{fit, FitReport, TrainConfig};
use crate::{Error, Result, N_CLASSES};

/// Something that can be fitted on a labeled corpus and then score new records.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;
    /// Feature setting reported alongside the metrics.
    fn setting(&self) -> String;
    fn fit(&self, train: &Corpus, seed: u64) -> Result<Box<dyn ProbabilisticModel>>;
}

/// A classical model on one feature view, with standardization.
#[derive(Debug, Clone)]
pub struct ClassicalLearner {
    pub kind: BaselineKind,
    pub view: FeatureView,
    pub cfg: BaselineConfig,
}

pub fn view_setting(view: FeatureView) -> &'static str {
    match view {
        FeatureView::Text => "text-only",
        FeatureView::Image => "image-only",
        FeatureView::Concat => "multimodal",
    }
}

impl Learner for ClassicalLearner {
    fn name(&self) -> String {
        match self.kind {
            BaselineKind::LogReg => "logreg",
            BaselineKind::Svm => "svm",
            BaselineKind::Forest => "forest",
            BaselineKind::Stacking => "stacking",
        }
        .into()
    }

    fn setting(&self) -> String {
        view_setting(self.view).into()
    }

    fn fit(&self, train: &Corpus, seed: u64) -> Result<Box<dyn ProbabilisticModel>> {
        Ok(Box::new(ClassicalPipeline::fit(train, self.view, self.kind, &self.cfg, seed)?))
    }
}

/// The fusion transformer. Input dimensions are taken from the training corpus.
#[derive(Debug, Clone)]
pub struct FusionLearner {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

/// Fitted fusion model together with its input standardization.
#[derive(Debug, Clone)]
pub struct FusionPredictor {
    pub model: FusionModel,
    pub scaler: Standardizer,
    pub report: FitReport,
}

impl ProbabilisticModel for FusionPredictor {
    fn name(&self) -> String {
        "fusion".into()
    }

    fn predict_proba(&self, c: &Corpus) -> Result<Matrix> {
        self.model.predict(&standardize_apply(&self.scaler, c)?).map(|(_, p)| p)
    }
}

impl FusionLearner {
    pub fn fit_predictor(&self, train: &Corpus, seed: u64) -> Result<FusionPredictor> {
        let scaler = standardize_fit(train, Modality::Both)?;
        let scaled = standardize_apply(&scaler, train)?;
        let (orig, pseudo): (Vec<_>, Vec<_>) = scaled.records().iter().cloned().partition(|r| !r.is_pseudo());
        let orig = Corpus::new(orig, train.d_text(), train.d_image())?;
        let pseudo = Corpus::new(pseudo, train.d_text(), train.d_image())?;
        let arch = ArchConfig { d_text: train.d_text(), d_image: train.d_image(), ..self.arch.clone() };
        let root = SeededRng::new(seed);
        let mut model = init_model(&arch, &mut root.derive("init"))?;
        let pseudo = (!pseudo.is_empty()).then_some(&pseudo);
        let report = fit(&mut model, &orig, pseudo, &self.train, &mut root.derive("train"))?;
        Ok(FusionPredictor { model, scaler, report })
    }
}

impl Learner for FusionLearner {
    fn name(&self) -> String {
        "fusion".into()
    }

    fn setting(&self) -> String {
        "multimodal".into()
    }

    fn fit(&self, train: &Corpus, seed: u64) -> Result<Box<dyn ProbabilisticModel>> {
        Ok(Box::new(self.fit_predictor(train, seed)?))
    }
}

/// Self-training inside each fold, drawing pseudo-labels from `unlabeled`.
#[derive(Debug, Clone, Copy)]
pub struct SelfTrainPlan<'a> {
    pub cfg: &'a SelfTrainConfig,
    pub unlabeled: &'a Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_pseudo: usize,
    pub n_val: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: Option<f64>,
}

/// Id-level separation check of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageAudit {
    pub fold: usize,
    pub train_ids: usize,
    pub pseudo_source_ids: usize,
    pub validation_ids: usize,
    pub overlap: usize,
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub metrics: FoldMetrics,
    pub confusion: ConfusionMatrix,
    pub audit: LeakageAudit,
    pub round_logs: Vec<RoundLog>,
    pub decisions: Vec<PseudoLabelDecision>,
    /// Pseudo-labels used for this fold's fit.
    pub pseudo_labels: Vec<(String, RiskClass)>,
    pub zero_division: bool,
    pub auroc_skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArrays {
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub auroc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStd {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auroc: Option<f64>,
}

/// Cross-validated metrics. Headline values are means over folds, with
/// population standard deviations alongside; per-class scores and the
/// confusion matrix are pooled over all validation predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub setting: String,
    pub averaging: String,
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub auroc: Option<f64>,
    pub std: MetricStd,
    pub per_class: Vec<ClassScores>,
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    pub folds: FoldArrays,
    pub fold_details: Vec<FoldMetrics>,
    /// Some precision or recall was 0/0 and counted as 0.
    pub zero_division: bool,
    pub notes: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub folds: Vec<FoldRun>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn run_fold(
    learner: &dyn Learner,
    corpus: &Corpus,
    fold: usize,
    train_idx: &[usize],
    val_idx: &[usize],
    seed: u64,
    plan: Option<SelfTrainPlan<'_>>,
) -> Result<FoldRun> {
    let root = SeededRng::new(seed).derive_indexed("fold", fold as u64);
    let train = corpus.subset(train_idx);
    let val = corpus.subset(val_idx);

    let (fit_set, round_logs, decisions) = match plan {
        Some(p) => {
            let out = run_self_training(&train, p.unlabeled, p.cfg, &mut root.derive("selftrain"))?;
            (out.labeled, out.logs, out.decisions)
        }
        None => (train.clone(), Vec::new(), Vec::new()),
    };
    let pseudo_labels: Vec<(String, RiskClass)> = fit_set
        .records()
        .iter()
        .filter(|r| r.is_pseudo())
        .map(|r| (r.id.clone(), r.label.expect("pseudo records carry labels")))
        .collect();

    let train_ids = train.ids();
    let val_ids = val.ids();
    let source: BTreeSet<String> = pseudo_labels.iter().map(|(id, _)| id.clone()).collect();
    let seen: BTreeSet<&String> =
        train_ids.iter().chain(&source).chain(fit_set.records().iter().map(|r| &r.id)).collect();
    let overlap = val_ids.iter().filter(|id| seen.contains(id)).count();
    let audit = LeakageAudit {
        fold,
        train_ids: train_ids.len(),
        pseudo_source_ids: source.len(),
        validation_ids: val_ids.len(),
        overlap,
    };
    if overlap > 0 {
        return Err(Error::Leakage(format!("fold {fold}: {overlap} validation ids reached training")));
    }

    let model = learner.fit(&fit_set, root.derive("fit").next_u64())?;
    let probs = model.predict_proba(&val)?;
    let truth = val.class_indices()?;
    let confusion = ConfusionMatrix::from_predictions(&truth, &probs.argmax_rows())?;
    let prf = macro_prf(&confusion)?;
    let (auroc, auroc_skipped) = match auroc_ovr_detail(&probs, &truth) {
        Ok(s) => (Some(s.macro_auroc), (0..N_CLASSES).filter(|&c| s.per_class[c].is_none()).collect()),
        Err(Error::MetricUndefined(_)) => (None, (0..N_CLASSES).collect()),
        Err(e) => return Err(e),
    };
    Ok(FoldRun {
        metrics: FoldMetrics {
            fold,
            n_train: train.len(),
            n_pseudo: pseudo_labels.len(),
            n_val: val.len(),
            accuracy: accuracy(&confusion)?,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            auroc,
        },
        confusion,
        audit,
        round_logs,
        decisions,
        pseudo_labels,
        zero_division: prf.zero_division,
        auroc_skipped,
    })
}

/// Stratified k-fold evaluation of `learner` on a fully labeled corpus.
///
/// With a self-training plan, each fold runs self-training from its own
/// training records plus the external pool only; every fold is checked for
/// id overlap between validation and anything used for fitting.
pub fn evaluate_cv(
    learner: &dyn Learner,
    corpus: &Corpus,
    k: usize,
    seed: u64,
    plan: Option<SelfTrainPlan<'_>>,
) -> Result<CvOutcome> {
    if !corpus.is_fully_labeled() {
        return Err(Error::Contract("cross-validation needs a fully labeled corpus".into()));
    }
    if let Some(p) = plan {
        p.cfg.validate()?;
        let ids = corpus.ids();
        if let Some(r) = p.unlabeled.records().iter().find(|r| ids.contains(&r.id)) {
            return Err(Error::Leakage(format!("unlabeled pool shares id {} with the labeled corpus", r.id)));
        }
    }
    let labels = corpus.class_indices()?;
    let split = stratified_kfold(&labels, k, seed)?;
    let folds: Vec<(Vec<usize>, Vec<usize>)> = split.folds().collect();
    let runs = folds
        .par_iter()
        .enumerate()
        .map(|(f, (tr, va))| run_fold(learner, corpus, f, tr, va, seed, plan))
        .collect::<Result<Vec<_>>>()?;

    let col = |f: fn(&FoldMetrics) -> f64| runs.iter().map(|r| f(&r.metrics)).collect::<Vec<f64>>();
    let acc = col(|m| m.accuracy);
    let f1 = col(|m| m.f1);
    let prec = col(|m| m.precision);
    let rec = col(|m| m.recall);
    let auc: Vec<Option<f64>> = runs.iter().map(|r| r.metrics.auroc).collect();
    let auc_defined: Vec<f64> = auc.iter().flatten().copied().collect();
    let auc_stats = (!auc_defined.is_empty()).then(|| mean_std(&auc_defined));

    let mut pooled = ConfusionMatrix::default();
    runs.iter().for_each(|r| pooled.merge(&r.confusion));
    let pooled_prf = macro_prf(&pooled)?;

    let mut notes = Vec::new();
    for r in &runs {
        if !r.auroc_skipped.is_empty() {
            let classes: Vec<String> = r.auroc_skipped.iter().map(|c| (c + 1).to_string()).collect();
            notes.push(format!("fold {}: AUROC skipped for class {}", r.metrics.fold, classes.join(", ")));
        }
    }
    let mut setting = learner.setting();
    if plan.is_some() {
        setting.push_str(" (self-training)");
    }
    let report = MetricsReport {
        model: learner.name(),
        setting,
        averaging: "macro".into(),
        k,
        seed,
        n_samples: corpus.len(),
        accuracy: mean_std(&acc).0,
        f1: mean_std(&f1).0,
        precision: mean_std(&prec).0,
        recall: mean_std(&rec).0,
        auroc: auc_stats.map(|s| s.0),
        std: MetricStd {
            accuracy: mean_std(&acc).1,
            f1: mean_std(&f1).1,
            precision: mean_std(&prec).1,
            recall: mean_std(&rec).1,
            auroc: auc_stats.map(|s| s.1),
        },
        per_class: pooled_prf.per_class.to_vec(),
        confusion: pooled.counts,
        folds: FoldArrays { accuracy: acc, f1, precision: prec, recall: rec, auroc: auc },
        fold_details: runs.iter().map(|r| r.metrics.clone()).collect(),
        zero_division: runs.iter().any(|r| r.zero_division),
        notes,
    };
    Ok(CvOutcome { report, folds: runs })
}

/// Replaces every image vector with N(0, 1) noise, then cross-validates.
pub fn ablate_image_noise(
    learner: &dyn Learner,
    corpus: &Corpus,
    k: usize,
    seed: u64,
    rng: &mut SeededRng,
) -> Result<CvOutcome> {
    let noisy = replace_images_with_noise(corpus, rng)?;
    let mut out = evaluate_cv(learner, &noisy, k, seed, None)?;
    out.report.setting = "text+image-noise".into();
    Ok(out)
}
