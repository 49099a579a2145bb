//! Pseudo-labelling of unlabeled records.
//!
//! Two strategies are available. Ensemble consistency refits an SVM, a
//! logistic regression and a random forest on the early-fused features each
//! round, accepts samples on which all three agree with mean confidence above
//! `tau`, and moves a random fraction of them into the labeled set. The
//! stacking teacher accepts every sample whose top stacking probability
//! exceeds `tau`.

mod decide;
mod engine;

pub use decide::{decide_all, decide_from_probs, ensemble_decide, ModelVote, ProbabilisticModel, PseudoLabelDecision};
pub use engine::{
    fit_ensemble, run_round_ensemble, run_round_with_models, run_self_training, stacking_teacher_round, to_jsonl,
    ModelConfidence, RoundLog, SelfTrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EnsembleConsistency,
    StackingTeacher,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ensemble" | "ensemble_consistency" => Ok(Strategy::EnsembleConsistency),
            "stacking" | "stacking_teacher" => Ok(Strategy::StackingTeacher),
            other => Err(Error::Config(format!("unknown strategy {other:?} (ensemble | stacking)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    pub strategy: Strategy,
    pub tau: f64,
    pub rounds: usize,
    /// Share of the accepted set moved per ensemble round.
    pub sample_fraction: f64,
    pub baselines: BaselineConfig,
}

impl SelfTrainConfig {
    pub fn ensemble() -> Self {
        Self {
            strategy: Strategy::EnsembleConsistency,
            tau: 0.95,
            rounds: 3,
            sample_fraction: 0.25,
            baselines: BaselineConfig::default(),
        }
    }

    pub fn stacking() -> Self {
        Self { strategy: Strategy::StackingTeacher, tau: 0.9, ..Self::ensemble() }
    }

    /// Defaults of the given strategy.
    pub fn for_strategy(strategy: Strategy) -> Self {
        match strategy {
            Strategy::EnsembleConsistency => Self::ensemble(),
            Strategy::StackingTeacher => Self::stacking(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::Config(format!("sample_fraction must be in (0, 1], got {}", self.sample_fraction)));
        }
        Ok(())
    }
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        Self::ensemble()
    }
}
