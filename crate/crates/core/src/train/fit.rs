use serde::{Deserialize, Serialize};

use super::optim::{adagrad_step, adam_step, step_decay, OptimizerState};
use super::sampling::{augment, oversample, stratified_holdout};
use crate::dataio::Corpus;
use crate::fusion::{FusionModel, Mode, PassConfig};
use crate::numcore::{log_sum_exp, Matrix, SeededRng};
use crate::train::cross_entropy;
use crate::{Error, Result};

/// Share of the labeled set held out for early stopping.
pub const VAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Adagrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub step_gamma: f64,
    pub step_every: usize,
    /// Weight of the pseudo-labeled loss term.
    pub lambda: f64,
    pub oversample: bool,
    /// Std of Gaussian input jitter during training (0 disables).
    pub aug_sigma: f64,
    /// Input feature-masking probability during training (0 disables).
    pub aug_dropout: f64,
}

impl Default for TrainConfig {
    /// Adam at 3e-4, decay 1e-4, batch 32, 50 epochs, patience 10, StepLR(0.1, 5), λ = 1.
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr: 3e-4,
            weight_decay: 1e-4,
            batch_size: 32,
            max_epochs: 50,
            patience: 10,
            step_gamma: 0.1,
            step_every: 5,
            lambda: 1.0,
            oversample: false,
            aug_sigma: 0.0,
            aug_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    /// Adagrad at learning rate 0.01 with the remaining defaults.
    pub fn adagrad() -> Self {
        Self { optimizer: OptimizerKind::Adagrad, lr: 0.01, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.step_gamma > 0.0 && self.step_gamma <= 1.0) {
            return Err(Error::Config(format!("step_gamma must be in (0, 1], got {}", self.step_gamma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2 for batch norm".into()));
        }
        if self.max_epochs == 0 || self.step_every == 0 {
            return Err(Error::Config("max_epochs and step_every must be >= 1".into()));
        }
        if !(self.aug_sigma >= 0.0) || !(0.0..1.0).contains(&self.aug_dropout) {
            return Err(Error::Config("aug_sigma must be >= 0 and aug_dropout in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Training history. Epochs are numbered from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean loss on the training split before the first update (eval mode).
    pub initial_train_loss: f64,
    /// Mean per-batch combined loss of each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    /// Epoch whose parameters the model holds on return.
    pub restored_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_pseudo: usize,
}

fn batches(n: usize, size: usize, order: &[usize]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if n > 1 && out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

fn eval_loss_accuracy(model: &FusionModel, text: &Matrix, image: &Matrix, y: &[usize]) -> Result<(f64, f64)> {
    let out = model.forward_with(text, image, PassConfig::EVAL, &mut SeededRng::new(0))?;
    let loss = cross_entropy(&out.logits, y)?;
    let pred = out.probs.argmax_rows();
    let hits = pred.iter().zip(y).filter(|(p, t)| p == t).count();
    Ok((loss, hits as f64 / y.len() as f64))
}

/// Trains `model` on `labeled` plus an optional pseudo-labeled corpus,
/// minimising `CE(labeled) + λ·CE(pseudo)` per batch, with a stratified
/// validation holdout and early stopping. The model returns in eval mode
/// holding the best-validation parameters.
pub fn fit(
    model: &mut FusionModel,
    labeled: &Corpus,
    pseudo: Option<&Corpus>,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<FitReport> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InsufficientData("no labeled records to train on".into()));
    }
    if labeled.d_text() != model.cfg.d_text || labeled.d_image() != model.cfg.d_image {
        return Err(Error::Shape(format!(
            "corpus dims ({}, {}) do not match model dims ({}, {})",
            labeled.d_text(),
            labeled.d_image(),
            model.cfg.d_text,
            model.cfg.d_image
        )));
    }
    labeled.image_matrix()?;
    let base = SeededRng::new(rng.next_u64());

    let (mut train, val) = stratified_holdout(labeled, VAL_FRACTION, &mut base.derive("holdout"))?;
    if cfg.oversample {
        train = oversample(&train, &mut base.derive("oversample"))?;
    }
    let n_labeled = train.len();
    let empty = Corpus::empty(labeled.d_text(), labeled.d_image());
    let pseudo = pseudo.unwrap_or(&empty);
    if !pseudo.is_empty() {
        pseudo.image_matrix()?;
    }
    let all = train.concat(pseudo)?;
    let text = all.text_matrix();
    let image = all.image_matrix()?;
    let y = all.class_indices()?;
    let is_pseudo: Vec<bool> = (0..all.len()).map(|i| i >= n_labeled).collect();
    if all.len() < 2 {
        return Err(Error::BatchSize("training needs at least 2 samples per batch".into()));
    }

    let (val_text, val_image, val_y) = (val.text_matrix(), val.image_matrix()?, val.class_indices()?);
    let (train_text, train_image) = (train.text_matrix(), train.image_matrix()?);
    let train_y = train.class_indices()?;
    let initial_train_loss = eval_loss_accuracy(model, &train_text, &train_image, &train_y)?.0;

    let shapes: Vec<usize> = model.params.trainable().iter().map(|(_, s)| s.len()).collect();
    let mut state = match cfg.optimizer {
        OptimizerKind::Adam => OptimizerState::adam(&shapes),
        OptimizerKind::Adagrad => OptimizerState::adagrad(&shapes),
    };
    let mut batch_rng = base.derive("batching");
    let mut drop_rng = base.derive("dropout");
    let mut aug_rng = base.derive("augment");
    let augmenting = cfg.aug_sigma > 0.0 || cfg.aug_dropout > 0.0;

    let mut report = FitReport {
        initial_train_loss,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        learning_rate: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_epoch: 0,
        restored_epoch: 0,
        n_train: n_labeled,
        n_val: val.len(),
        n_pseudo: pseudo.len(),
    };
    let mut best_params = model.params.clone();
    let mut stale = 0usize;
    model.set_mode(Mode::Train);

    for epoch in 0..cfg.max_epochs {
        let lr = step_decay(cfg.lr, epoch, cfg.step_gamma, cfg.step_every);
        let mut order: Vec<usize> = (0..all.len()).collect();
        batch_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let plan = batches(all.len(), cfg.batch_size, &order);
        for idx in &plan {
            let (mut bt, mut bi) = (text.select_rows(idx), image.select_rows(idx));
            if augmenting {
                (bt, bi) = augment(&bt, &bi, cfg.aug_sigma, cfg.aug_dropout, &mut aug_rng)?;
            }
            let by: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let n_p = idx.iter().filter(|&&i| is_pseudo[i]).count();
            let n_l = idx.len() - n_p;
            let weights: Vec<f64> =
                idx.iter().map(|&i| if is_pseudo[i] { cfg.lambda / n_p as f64 } else { 1.0 / n_l as f64 }).collect();

            let out = model.forward_with(&bt, &bi, PassConfig::TRAIN, &mut drop_rng)?;
            let loss: f64 = out
                .logits
                .row_iter()
                .zip(&by)
                .zip(&weights)
                .map(|((row, &t), w)| w * (log_sum_exp(row) - row[t]))
                .sum();
            if !loss.is_finite() {
                return Err(Error::Evaluation(format!("training loss became non-finite in epoch {epoch}")));
            }
            epoch_loss += loss;
            let grads = model.backward_weighted(&out.cache, &by, &weights)?;
            model.update_running_stats(&out.cache);

            let gs = grads.tensors();
            let gslices: Vec<&[f64]> = gs.iter().map(|(_, s)| *s).collect();
            let mut pslices: Vec<&mut [f64]> = model.params.trainable_mut().into_iter().map(|(_, s)| s).collect();
            match cfg.optimizer {
                OptimizerKind::Adam => adam_step(&mut pslices, &gslices, &mut state, lr, cfg.weight_decay)?,
                OptimizerKind::Adagrad => adagrad_step(&mut pslices, &gslices, &mut state, lr, cfg.weight_decay)?,
            }
        }

        let (vl, va) = eval_loss_accuracy(model, &val_text, &val_image, &val_y)?;
        report.train_loss.push(epoch_loss / plan.len() as f64);
        report.val_loss.push(vl);
        report.val_accuracy.push(va);
        report.learning_rate.push(lr);
        report.stopped_epoch = epoch;
        if vl < report.best_val_loss {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best_params = model.params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    model.params = best_params;
    model.set_mode(Mode::Eval);
    report.restored_epoch = report.best_epoch;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SynthConfig};
    use crate::fusion::{init_model, ArchConfig};

    fn small_corpus(n: usize, seed: u64) -> Corpus {
        generate_synthetic(&SynthConfig {
            n_per_class: n,
            d_text: 6,
            d_image: 4,
            separation: 4.0,
            sigma: 1.0,
            labeled_fraction: 1.0,
            seed,
        })
        .unwrap()
    }

    fn small_arch() -> ArchConfig {
        ArchConfig { d_model: 16, ..ArchConfig::desk(6, 4) }
    }

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..9).collect();
        let b = batches(9, 4, &order);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(batches(8, 4, &order[..8]).len(), 2);
    }

    #[test]
    fn training_reduces_loss() {
        let c = small_corpus(30, 1);
        let mut m = init_model(&small_arch(), &mut SeededRng::new(2)).unwrap();
        let cfg = TrainConfig { lr: 3e-3, max_epochs: 15, step_every: 10, ..TrainConfig::default() };
        let r = fit(&mut m, &c, None, &cfg, &mut SeededRng::new(3)).unwrap();
        assert!(r.train_loss.last().unwrap() < &r.initial_train_loss);
        assert_eq!(m.mode, Mode::Eval);
    }

    #[test]
    fn patience_zero_stops_at_first_non_improvement() {
        let c = small_corpus(20, 4);
        let mut m = init_model(&small_arch(), &mut SeededRng::new(2)).unwrap();
        let cfg = TrainConfig { patience: 0, max_epochs: 50, lr: 3e-2, ..TrainConfig::default() };
        let r = fit(&mut m, &c, None, &cfg, &mut SeededRng::new(3)).unwrap();
        let first_bad = (1..r.val_loss.len())
            .find(|&e| r.val_loss[e] >= r.val_loss[..e].iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(Some(r.stopped_epoch), first_bad.or(Some(49)));
        assert_eq!(r.val_loss.len(), r.stopped_epoch + 1);
    }

    #[test]
    fn restored_parameters_are_from_best_epoch() {
        let c = small_corpus(20, 5);
        let mut m = init_model(&small_arch(), &mut SeededRng::new(7)).unwrap();
        let cfg = TrainConfig { lr: 1e-2, max_epochs: 12, patience: 3, ..TrainConfig::default() };
        let r = fit(&mut m, &c, None, &cfg, &mut SeededRng::new(8)).unwrap();
        let min = r.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_val_loss, min);
        assert_eq!(r.val_loss[r.restored_epoch], min);
        // Recompute on the same holdout: the returned model scores exactly the best loss.
        let base = SeededRng::new(SeededRng::new(8).next_u64());
        let (_, val) = stratified_holdout(&c, VAL_FRACTION, &mut base.derive("holdout")).unwrap();
        let (vl, _) =
            eval_loss_accuracy(&m, &val.text_matrix(), &val.image_matrix().unwrap(), &val.class_indices().unwrap())
                .unwrap();
        assert_eq!(vl, min);
    }

    #[test]
    fn separable_set_reaches_high_validation_accuracy() {
        let c = small_corpus(20, 9);
        assert_eq!(c.len(), 60);
        let mut m = init_model(&small_arch(), &mut SeededRng::new(1)).unwrap();
        let cfg = TrainConfig { lr: 1e-2, max_epochs: 50, step_every: 50, batch_size: 8, ..TrainConfig::default() };
        let r = fit(&mut m, &c, None, &cfg, &mut SeededRng::new(2)).unwrap();
        let best = r.val_accuracy.iter().copied().fold(0.0, f64::max);
        assert!(best >= 0.9, "{:?}", r.val_accuracy);
    }

    #[test]
    fn bit_reproducible() {
        let c = small_corpus(15, 2);
        let cfg = TrainConfig { max_epochs: 4, aug_sigma: 0.1, ..TrainConfig::default() };
        let run = || {
            let mut m = init_model(&small_arch(), &mut SeededRng::new(1)).unwrap();
            let r = fit(&mut m, &c, None, &cfg, &mut SeededRng::new(2)).unwrap();
            (m, r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn missing_class_is_a_stratification_error() {
        let c = small_corpus(10, 2);
        let keep: Vec<usize> = (0..c.len()).filter(|&i| c.records()[i].label.unwrap().get() != 3).collect();
        let c = c.subset(&keep);
        let mut m = init_model(&small_arch(), &mut SeededRng::new(1)).unwrap();
        let err = fit(&mut m, &c, None, &TrainConfig::default(), &mut SeededRng::new(2)).unwrap_err();
        assert!(matches!(err, Error::Stratification(_)));
    }
}
