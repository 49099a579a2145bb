use serde::{Deserialize, Serialize};

use super::config::ArchConfig;
use super::layers::{BatchNorm, Linear};
use crate::numcore::{xavier_init, Matrix, SeededRng};
use crate::{Result, N_CLASSES};

/// Linear → batch norm → GELU → dropout, mapping one modality to width `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLayer {
    pub linear: Linear,
    pub bn: BatchNorm,
}

/// Post-norm transformer encoder layer over the two-token sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
}

/// `2d → d → d/4 → 3`, each hidden layer followed by GELU, batch norm and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub fc1: Linear,
    pub bn1: BatchNorm,
    pub fc2: Linear,
    pub bn2: BatchNorm,
    pub fc3: Linear,
}

/// Every tensor of the model. Also used as the gradient container, in which
/// case the batch-norm running statistics are unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub text_proj: ProjectionLayer,
    pub image_proj: ProjectionLayer,
    pub layers: Vec<EncoderLayer>,
    pub head: ClassifierHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

/// Whether a tensor is updated by the optimizer or is a running statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Trainable,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub cfg: ArchConfig,
    pub params: Params,
    pub mode: Mode,
}

/// Exact gradients of the loss with respect to every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub params: Params,
}

pub(crate) trait Slot<'a> {
    type Out;
    fn slot(self) -> Self::Out;
}

impl<'a> Slot<'a> for &'a Matrix {
    type Out = &'a [f64];
    fn slot(self) -> &'a [f64] {
        self.data()
    }
}

impl<'a> Slot<'a> for &'a mut Matrix {
    type Out = &'a mut [f64];
    fn slot(self) -> &'a mut [f64] {
        self.data_mut()
    }
}

impl<'a> Slot<'a> for &'a Vec<f64> {
    type Out = &'a [f64];
    fn slot(self) -> &'a [f64] {
        self
    }
}

impl<'a> Slot<'a> for &'a mut Vec<f64> {
    type Out = &'a mut [f64];
    fn slot(self) -> &'a mut [f64] {
        self
    }
}

/// Lists `(name, kind, slice)` for every tensor in the fixed declared order
/// shared by the optimizer, gradient checks and the model file.
macro_rules! tensor_table {
    ($p:expr, $iter:ident $(, $m:tt)?) => {{
        use TensorKind::{Buffer as B, Trainable as T};
        let p = $p;
        let mut out = Vec::new();
        for (name, proj) in [("text_proj", &$($m)? p.text_proj), ("image_proj", &$($m)? p.image_proj)] {
            out.push((format!("{name}.weight"), T, (&$($m)? proj.linear.weight).slot()));
            out.push((format!("{name}.bias"), T, (&$($m)? proj.linear.bias).slot()));
            out.push((format!("{name}.bn_gamma"), T, (&$($m)? proj.bn.gamma).slot()));
            out.push((format!("{name}.bn_beta"), T, (&$($m)? proj.bn.beta).slot()));
            out.push((format!("{name}.bn_running_mean"), B, (&$($m)? proj.bn.running_mean).slot()));
            out.push((format!("{name}.bn_running_var"), B, (&$($m)? proj.bn.running_var).slot()));
        }
        for (i, l) in p.layers.$iter().enumerate() {
            out.push((format!("layers.{i}.wq"), T, (&$($m)? l.wq).slot()));
            out.push((format!("layers.{i}.wk"), T, (&$($m)? l.wk).slot()));
            out.push((format!("layers.{i}.wv"), T, (&$($m)? l.wv).slot()));
            out.push((format!("layers.{i}.wo"), T, (&$($m)? l.wo).slot()));
            out.push((format!("layers.{i}.ln1_gamma"), T, (&$($m)? l.ln1_gamma).slot()));
            out.push((format!("layers.{i}.ln1_beta"), T, (&$($m)? l.ln1_beta).slot()));
            out.push((format!("layers.{i}.ff1_weight"), T, (&$($m)? l.ff1.weight).slot()));
            out.push((format!("layers.{i}.ff1_bias"), T, (&$($m)? l.ff1.bias).slot()));
            out.push((format!("layers.{i}.ff2_weight"), T, (&$($m)? l.ff2.weight).slot()));
            out.push((format!("layers.{i}.ff2_bias"), T, (&$($m)? l.ff2.bias).slot()));
            out.push((format!("layers.{i}.ln2_gamma"), T, (&$($m)? l.ln2_gamma).slot()));
            out.push((format!("layers.{i}.ln2_beta"), T, (&$($m)? l.ln2_beta).slot()));
        }
        let h = &$($m)? p.head;
        out.push(("head.fc1_weight".to_string(), T, (&$($m)? h.fc1.weight).slot()));
        out.push(("head.fc1_bias".to_string(), T, (&$($m)? h.fc1.bias).slot()));
        out.push(("head.bn1_gamma".to_string(), T, (&$($m)? h.bn1.gamma).slot()));
        out.push(("head.bn1_beta".to_string(), T, (&$($m)? h.bn1.beta).slot()));
        out.push(("head.bn1_running_mean".to_string(), B, (&$($m)? h.bn1.running_mean).slot()));
        out.push(("head.bn1_running_var".to_string(), B, (&$($m)? h.bn1.running_var).slot()));
        out.push(("head.fc2_weight".to_string(), T, (&$($m)? h.fc2.weight).slot()));
        out.push(("head.fc2_bias".to_string(), T, (&$($m)? h.fc2.bias).slot()));
        out.push(("head.bn2_gamma".to_string(), T, (&$($m)? h.bn2.gamma).slot()));
        out.push(("head.bn2_beta".to_string(), T, (&$($m)? h.bn2.beta).slot()));
        out.push(("head.bn2_running_mean".to_string(), B, (&$($m)? h.bn2.running_mean).slot()));
        out.push(("head.bn2_running_var".to_string(), B, (&$($m)? h.bn2.running_var).slot()));
        out.push(("head.fc3_weight".to_string(), T, (&$($m)? h.fc3.weight).slot()));
        out.push(("head.fc3_bias".to_string(), T, (&$($m)? h.fc3.bias).slot()));
        out
    }};
}

impl Params {
    /// All tensors, trainable and buffers, in declared order.
    pub fn tensors(&self) -> Vec<(String, TensorKind, &[f64])> {
        tensor_table!(self, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorKind, &mut [f64])> {
        tensor_table!(self, iter_mut, mut)
    }

    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        self.tensors().into_iter().filter(|(_, k, _)| *k == TensorKind::Trainable).map(|(n, _, s)| (n, s)).collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.tensors_mut().into_iter().filter(|(_, k, _)| *k == TensorKind::Trainable).map(|(n, _, s)| (n, s)).collect()
    }

    /// Same shapes, every entry zero.
    pub fn zeros_like(cfg: &ArchConfig) -> Params {
        let d = cfg.d_model;
        let proj = |d_in| ProjectionLayer { linear: Linear::zeros(d_in, d), bn: BatchNorm::zeros(d) };
        let layer = || EncoderLayer {
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            ln1_gamma: vec![0.0; d],
            ln1_beta: vec![0.0; d],
            ff1: Linear::zeros(d, cfg.ff_dim()),
            ff2: Linear::zeros(cfg.ff_dim(), d),
            ln2_gamma: vec![0.0; d],
            ln2_beta: vec![0.0; d],
        };
        let h = cfg.head_hidden();
        Params {
            text_proj: proj(cfg.d_text),
            image_proj: proj(cfg.d_image),
            layers: (0..cfg.layers).map(|_| layer()).collect(),
            head: ClassifierHead {
                fc1: Linear::zeros(2 * d, d),
                bn1: BatchNorm::zeros(d),
                fc2: Linear::zeros(d, h),
                bn2: BatchNorm::zeros(h),
                fc3: Linear::zeros(h, N_CLASSES),
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, s)| s.iter().all(|x| x.is_finite()))
    }
}

/// Xavier weights, zero biases, batch norm γ=1/β=0, running mean 0 / var 1,
/// layer norm γ=1/β=0.
pub fn init_model(cfg: &ArchConfig, rng: &mut SeededRng) -> Result<FusionModel> {
    cfg.validate()?;
    let d = cfg.d_model;
    let mut proj = |d_in| ProjectionLayer { linear: Linear::init(d_in, d, rng), bn: BatchNorm::new(d) };
    let text_proj = proj(cfg.d_text);
    let image_proj = proj(cfg.d_image);
    let layers = (0..cfg.layers)
        .map(|_| EncoderLayer {
            wq: xavier_init(d, d, rng),
            wk: xavier_init(d, d, rng),
            wv: xavier_init(d, d, rng),
            wo: xavier_init(d, d, rng),
            ln1_gamma: vec![1.0; d],
            ln1_beta: vec![0.0; d],
            ff1: Linear::init(d, cfg.ff_dim(), rng),
            ff2: Linear::init(cfg.ff_dim(), d, rng),
            ln2_gamma: vec![1.0; d],
            ln2_beta: vec![0.0; d],
        })
        .collect();
    let h = cfg.head_hidden();
    let head = ClassifierHead {
        fc1: Linear::init(2 * d, d, rng),
        bn1: BatchNorm::new(d),
        fc2: Linear::init(d, h, rng),
        bn2: BatchNorm::new(h),
        fc3: Linear::init(h, N_CLASSES, rng),
    };
    Ok(FusionModel { cfg: cfg.clone(), params: Params { text_proj, image_proj, layers, head }, mode: Mode::Train })
}

impl FusionModel {
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn parameter_count(&self) -> usize {
        self.params.trainable().iter().map(|(_, s)| s.len()).sum()
    }
}

impl GradientSet {
    pub fn zeros(cfg: &ArchConfig) -> Self {
        Self { params: Params::zeros_like(cfg) }
    }

    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        self.params.trainable()
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.params.trainable_mut()
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &GradientSet) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ArchConfig {
        ArchConfig { d_text: 5, d_image: 3, d_model: 8, layers: 1, heads: 2, ff_mult: 4, dropout: 0.0 }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = init_model(&tiny(), &mut SeededRng::new(3)).unwrap();
        let b = init_model(&tiny(), &mut SeededRng::new(3)).unwrap();
        assert_eq!(a, b);
        let c = init_model(&tiny(), &mut SeededRng::new(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let m = init_model(&tiny(), &mut SeededRng::new(1)).unwrap();
        assert_eq!(m.parameter_count(), 1135);
        let desk = ArchConfig::desk(16, 8);
        let m = init_model(&desk, &mut SeededRng::new(1)).unwrap();
        assert_eq!(m.parameter_count(), desk.parameter_count());
    }

    #[test]
    fn init_conventions() {
        let m = init_model(&tiny(), &mut SeededRng::new(1)).unwrap();
        for (name, kind, s) in m.params.tensors() {
            if name.ends_with("bias") || name.ends_with("beta") || name.ends_with("running_mean") {
                assert!(s.iter().all(|&x| x == 0.0), "{name}");
            }
            if name.ends_with("gamma") || name.ends_with("running_var") {
                assert!(s.iter().all(|&x| x == 1.0), "{name}");
            }
            if name.ends_with("running_mean") {
                assert_eq!(kind, TensorKind::Buffer);
            }
        }
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = ArchConfig { d_model: 10, heads: 3, ..tiny() };
        assert!(init_model(&cfg, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn tensor_table_names_are_unique() {
        let m = init_model(&ArchConfig { layers: 3, ..tiny() }, &mut SeededRng::new(1)).unwrap();
        let names: Vec<_> = m.params.tensors().into_iter().map(|(n, _, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len());
    }
}
