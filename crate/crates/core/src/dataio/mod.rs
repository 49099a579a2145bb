//! Corpus ingestion, preprocessing and the synthetic generator.

mod corpus;
mod csv_io;
mod pca;
mod standardize;
mod synth;

pub use corpus::{split_labeled, Corpus, EmbeddingRecord, Modality, Origin, RiskClass};
pub use csv_io::{load_corpus, read_corpus, save_corpus, write_corpus};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use standardize::{standardize_apply, standardize_fit, ColumnScaler, Standardizer};
pub use synth::{
    generate_synthetic, generate_synthetic_with_truth, perturb_gaussian, replace_images_with_noise, SynthConfig,
    SyntheticCorpus,
};
