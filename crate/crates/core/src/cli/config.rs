//! Flat `key = value` run configuration.
//!
//! Keys use the lower_snake names of the underlying configuration fields.
//! Blank lines and lines starting with `#` are ignored. Values given on the
//! command line are applied after the file, so flags win.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::baselines::BaselineConfig;
use crate::fusion::ArchConfig;
use crate::selftrain::{SelfTrainConfig, Strategy};
use crate::train::{OptimizerKind, TrainConfig};
use crate::{Error, Result};

/// Every key accepted in config files and by `--set`.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "data",
    "unlabeled",
    "out_dir",
    "d_model",
    "layers",
    "heads",
    "ff_mult",
    "dropout",
    "optimizer",
    "lr",
    "weight_decay",
    "batch_size",
    "max_epochs",
    "patience",
    "step_gamma",
    "step_every",
    "lambda",
    "oversample",
    "aug_sigma",
    "aug_dropout",
    "strategy",
    "tau",
    "rounds",
    "sample_fraction",
    "k",
    "setting",
    "model",
    "svm_gamma",
    "svm_epochs",
    "svm_reg",
    "logreg_l2",
    "logreg_iters",
    "logreg_lr",
    "forest_n_trees",
    "forest_max_depth",
    "stacking_folds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Text,
    Image,
    Multimodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Svm,
    Logreg,
    Forest,
    Stacking,
    Fusion,
}

/// Effective configuration of one command, echoed into its manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub selftrain: SelfTrainConfig,
    pub baselines: BaselineConfig,
    pub k: usize,
    pub setting: Setting,
    pub model: ModelChoice,
    #[serde(skip)]
    lr_set: bool,
    #[serde(skip)]
    tau_set: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            unlabeled: None,
            out_dir: None,
            arch: ArchConfig::desk(0, 0),
            train: TrainConfig::default(),
            selftrain: SelfTrainConfig::ensemble(),
            baselines: BaselineConfig::default(),
            k: 5,
            setting: Setting::Multimodal,
            model: ModelChoice::Svm,
            lr_set: false,
            tau_set: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {v:?} for {key} (true | false)"))),
    }
}

/// Parses `key = value` lines.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}

impl RunConfig {
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, v)?,
            "data" => self.data = Some(PathBuf::from(v)),
            "unlabeled" => self.unlabeled = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = Some(PathBuf::from(v)),
            "d_model" => self.arch.d_model = parse(key, v)?,
            "layers" => self.arch.layers = parse(key, v)?,
            "heads" => self.arch.heads = parse(key, v)?,
            "ff_mult" => self.arch.ff_mult = parse(key, v)?,
            "dropout" => self.arch.dropout = parse(key, v)?,
            "optimizer" => {
                self.train.optimizer = match v {
                    "adam" => OptimizerKind::Adam,
                    "adagrad" => OptimizerKind::Adagrad,
                    _ => return Err(Error::Config(format!("invalid optimizer {v:?} (adam | adagrad)"))),
                };
                if !self.lr_set {
                    self.train.lr = match self.train.optimizer {
                        OptimizerKind::Adam => TrainConfig::default().lr,
                        OptimizerKind::Adagrad => TrainConfig::adagrad().lr,
                    };
                }
            }
            "lr" => {
                self.train.lr = parse(key, v)?;
                self.lr_set = true;
            }
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "step_gamma" => self.train.step_gamma = parse(key, v)?,
            "step_every" => self.train.step_every = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "oversample" => self.train.oversample = parse_bool(key, v)?,
            "aug_sigma" => self.train.aug_sigma = parse(key, v)?,
            "aug_dropout" => self.train.aug_dropout = parse(key, v)?,
            "strategy" => {
                self.selftrain.strategy = v.parse::<Strategy>()?;
                if !self.tau_set {
                    self.selftrain.tau = SelfTrainConfig::for_strategy(self.selftrain.strategy).tau;
                }
            }
            "tau" => {
                self.selftrain.tau = parse(key, v)?;
                self.tau_set = true;
            }
            "rounds" => self.selftrain.rounds = parse(key, v)?,
            "sample_fraction" => self.selftrain.sample_fraction = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "setting" => {
                self.setting = match v {
                    "text" => Setting::Text,
                    "image" => Setting::Image,
                    "fusion" | "multimodal" => Setting::Multimodal,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid setting {v:?} (text | image | fusion | multimodal)"
                        )))
                    }
                }
            }
            "model" => {
                self.model = match v {
                    "svm" => ModelChoice::Svm,
                    "logreg" => ModelChoice::Logreg,
                    "forest" => ModelChoice::Forest,
                    "stacking" => ModelChoice::Stacking,
                    "fusion" => ModelChoice::Fusion,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid model {v:?} (svm | logreg | forest | stacking | fusion)"
                        )))
                    }
                }
            }
            "svm_gamma" => self.baselines.svm.gamma = Some(parse(key, v)?),
            "svm_epochs" => self.baselines.svm.epochs = parse(key, v)?,
            "svm_reg" => self.baselines.svm.reg = parse(key, v)?,
            "logreg_l2" => self.baselines.logreg.l2 = parse(key, v)?,
            "logreg_iters" => self.baselines.logreg.iters = parse(key, v)?,
            "logreg_lr" => self.baselines.logreg.lr = parse(key, v)?,
            "forest_n_trees" => {
                self.baselines.forest.n_trees = parse(key, v)?;
                self.baselines.stacking.forest.n_trees = self.baselines.forest.n_trees;
            }
            "forest_max_depth" => {
                self.baselines.forest.max_depth = parse(key, v)?;
                self.baselines.stacking.forest.max_depth = self.baselines.forest.max_depth;
            }
            "stacking_folds" => self.baselines.stacking.folds = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults, then `pairs` in order.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (String, String)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.apply(k, v)?;
        }
        cfg.selftrain.baselines = cfg.baselines.clone();
        cfg.train.validate()?;
        cfg.selftrain.validate()?;
        if cfg.k < 2 {
            return Err(Error::Config(format!("k must be >= 2, got {}", cfg.k)));
        }
        Ok(cfg)
    }
}
