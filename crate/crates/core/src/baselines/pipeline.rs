use serde::{Deserialize, Serialize};

use super::forest::{forest_fit, forest_predict_proba, ForestConfig, ForestModel};
use super::logreg::{logreg_fit, logreg_predict_proba, LogRegConfig, LogRegModel};
use super::stacking::{stacking_fit, stacking_predict_proba, StackingConfig, StackingModel};
use super::svm::{svm_fit, svm_predict_proba, KernelSvmModel, SvmConfig};
use crate::dataio::{ColumnScaler, Corpus};
use crate::numcore::Matrix;
use crate::Result;

/// Which embedding block a classical model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureView {
    Text,
    Image,
    /// Early fusion: `[text ‖ image]`.
    Concat,
}

pub fn feature_matrix(c: &Corpus, view: FeatureView) -> Result<Matrix> {
    match view {
        FeatureView::Text => Ok(c.text_matrix()),
        FeatureView::Image => c.image_matrix(),
        FeatureView::Concat => c.text_matrix().hstack(&c.image_matrix()?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LogReg,
    Svm,
    Forest,
    Stacking,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub logreg: LogRegConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
    pub stacking: StackingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineModel {
    LogReg(LogRegModel),
    Svm(KernelSvmModel),
    Forest(ForestModel),
    Stacking(StackingModel),
}

/// Fits one classical model; `seed` replaces the seeds in `cfg`.
pub fn fit_baseline(
    kind: BaselineKind,
    x: &Matrix,
    y: &[usize],
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<BaselineModel> {
    Ok(match kind {
        BaselineKind::LogReg => BaselineModel::LogReg(logreg_fit(x, y, &cfg.logreg)?),
        BaselineKind::Svm => BaselineModel::Svm(svm_fit(x, y, &SvmConfig { seed, ..cfg.svm.clone() })?),
        BaselineKind::Forest => BaselineModel::Forest(forest_fit(x, y, &ForestConfig { seed, ..cfg.forest.clone() })?),
        BaselineKind::Stacking => {
            let st =
                StackingConfig { forest: ForestConfig { seed, ..cfg.stacking.forest.clone() }, ..cfg.stacking.clone() };
            BaselineModel::Stacking(stacking_fit(x, y, &st)?)
        }
    })
}

impl BaselineModel {
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            BaselineModel::LogReg(m) => logreg_predict_proba(m, x),
            BaselineModel::Svm(m) => svm_predict_proba(m, x),
            BaselineModel::Forest(m) => forest_predict_proba(m, x),
            BaselineModel::Stacking(m) => stacking_predict_proba(m, x),
        }
    }
}

/// Feature view, standardization fitted on the training corpus, and a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalPipeline {
    pub view: FeatureView,
    pub scaler: ColumnScaler,
    pub model: BaselineModel,
}

impl ClassicalPipeline {
    pub fn fit(train: &Corpus, view: FeatureView, kind: BaselineKind, cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        let raw = feature_matrix(train, view)?;
        let scaler = ColumnScaler::fit(&raw)?;
        let x = scaler.apply(&raw)?;
        let y = train.class_indices()?;
        let model = fit_baseline(kind, &x, &y, cfg, seed)?;
        Ok(Self { view, scaler, model })
    }

    pub fn predict_proba(&self, c: &Corpus) -> Result<Matrix> {
        let x = self.scaler.apply(&feature_matrix(c, self.view)?)?;
        self.model.predict_proba(&x)
    }
}
