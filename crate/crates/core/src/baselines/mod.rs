//! Classical probabilistic classifiers: logistic regression, RBF SVM,
//! random forest and stacking, plus the standardizing feature pipeline.

mod forest;
mod logreg;
mod pipeline;
mod stacking;
mod svm;

pub use forest::{
    best_split, forest_fit, forest_predict_proba, grow_tree, DecisionTree, ForestConfig, ForestModel, Node,
};
pub use logreg::{logreg_fit, logreg_loss_grad, logreg_predict_proba, LogRegConfig, LogRegModel};
pub use pipeline::{
    feature_matrix, fit_baseline, BaselineConfig, BaselineKind, BaselineModel, ClassicalPipeline, FeatureView,
};
pub use stacking::{stacking_fit, stacking_predict_proba, StackingConfig, StackingModel};
pub use svm::{
    default_gamma, pegasos_binary, platt_fit, rbf, rbf_gram, svm_decision, svm_fit, svm_predict_proba, BinarySvm,
    KernelSvmModel, PlattScaling, SvmConfig,
};

use crate::numcore::Matrix;
use crate::{Error, Result, N_CLASSES};

/// Shared input checks: matching lengths, valid class indices, at least two classes.
fn check_xy(x: &Matrix, y: &[usize]) -> Result<()> {
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(Error::Shape(format!("{} rows with {} labels", x.rows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= N_CLASSES) {
        return Err(Error::Param(format!("class index {bad} outside 0..{N_CLASSES}")));
    }
    let mut seen = [false; N_CLASSES];
    y.iter().for_each(|&c| seen[c] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateData("need at least two classes to fit a classifier".into()));
    }
    Ok(())
}
