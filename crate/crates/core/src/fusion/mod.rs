//! Cross-modal transformer fusion classifier with analytic gradients.

mod config;
pub mod gradcheck;
mod io;
mod layers;
mod model;
mod network;

pub use config::ArchConfig;
pub use gradcheck::{
    analytic_gradients, gradcheck, gradcheck_against, randomize_batch_norm, GradCheckOptions, GradCheckReport,
    GroupReport,
};
pub use io::{load_model, load_model_with, model_from_bytes, model_to_bytes, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use layers::{apply_mask, dropout_mask, BatchNorm, BatchNormCache, Linear, BN_MOMENTUM};
pub use model::{
    init_model, ClassifierHead, EncoderLayer, FusionModel, GradientSet, Mode, Params, ProjectionLayer, TensorKind,
};
pub use network::{ForwardCache, ForwardOutput, PassConfig, TOKENS};

#[cfg(test)]
mod tests;
