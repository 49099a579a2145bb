use serde::{Deserialize, Serialize};

use super::forest::{forest_fit, forest_predict_proba, ForestConfig, ForestModel};
use super::logreg::{logreg_fit, logreg_predict_proba, LogRegConfig, LogRegModel};
use crate::eval::stratified_kfold;
use crate::numcore::Matrix;
use crate::{Result, N_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingConfig {
    pub folds: usize,
    pub forest: ForestConfig,
    pub meta: LogRegConfig,
}

impl Default for StackingConfig {
    fn default() -> Self {
        Self { folds: 5, forest: ForestConfig::default(), meta: LogRegConfig { l2: 1e-3, iters: 500, lr: 0.5 } }
    }
}

/// Random forest whose out-of-fold probabilities feed a logistic-regression meta-learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingModel {
    pub base: ForestModel,
    pub meta: LogRegModel,
}

pub fn stacking_fit(x: &Matrix, y: &[usize], cfg: &StackingConfig) -> Result<StackingModel> {
    super::check_xy(x, y)?;
    let split = stratified_kfold(y, cfg.folds, cfg.forest.seed)?;
    let mut oof = Matrix::zeros(x.rows(), N_CLASSES);
    for (f, (train, val)) in split.folds().enumerate() {
        let fold_cfg = ForestConfig { seed: cfg.forest.seed.wrapping_add(1 + f as u64), ..cfg.forest.clone() };
        let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let base = forest_fit(&x.select_rows(&train), &yt, &fold_cfg)?;
        let p = forest_predict_proba(&base, &x.select_rows(&val))?;
        for (k, &i) in val.iter().enumerate() {
            oof.row_mut(i).copy_from_slice(p.row(k));
        }
    }
    let meta = logreg_fit(&oof, y, &cfg.meta)?;
    let base = forest_fit(x, y, &cfg.forest)?;
    Ok(StackingModel { base, meta })
}

pub fn stacking_predict_proba(m: &StackingModel, x: &Matrix) -> Result<Matrix> {
    logreg_predict_proba(&m.meta, &forest_predict_proba(&m.base, x)?)
}
