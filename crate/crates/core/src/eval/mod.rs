//! Stratified cross-validation, classification metrics and the image-noise ablation.

mod cv;
mod metrics;
mod split;

pub use cv::{
    ablate_image_noise, evaluate_cv, view_setting, ClassicalLearner, CvOutcome, FoldArrays, FoldMetrics, FoldRun,
    FusionLearner, FusionPredictor, LeakageAudit, Learner, MetricStd, MetricsReport, SelfTrainPlan,
};
pub use metrics::{
    accuracy, auroc_binary, auroc_ovr, auroc_ovr_detail, macro_prf, AurocSummary, ClassScores, ConfusionMatrix,
    MacroPrf,
};
pub use split::{stratified_kfold, FoldSplit};
