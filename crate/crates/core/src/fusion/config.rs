use serde::{Deserialize, Serialize};

use crate::{Error, Result, N_CLASSES};

/// Architecture of the fusion classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub d_text: usize,
    pub d_image: usize,
    /// Shared hidden width `d`.
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub dropout: f64,
}

impl ArchConfig {
    /// Full-size configuration: d = 1024, 4 layers, 16 heads, 4× feed-forward, dropout 0.2.
    pub fn full(d_text: usize, d_image: usize) -> Self {
        Self { d_text, d_image, d_model: 1024, layers: 4, heads: 16, ff_mult: 4, dropout: 0.2 }
    }

    /// Desk-scale preset: d = 32, 2 layers, 4 heads. Same code path as [`ArchConfig::full`].
    pub fn desk(d_text: usize, d_image: usize) -> Self {
        Self { d_model: 32, layers: 2, heads: 4, ..Self::full(d_text, d_image) }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_text", self.d_text),
            ("d_image", self.d_image),
            ("d_model", self.d_model),
            ("layers", self.layers),
            ("heads", self.heads),
            ("ff_mult", self.ff_mult),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d_model {} is not divisible by heads {}", self.d_model, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Per-head width `d_k = d / h`.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn ff_dim(&self) -> usize {
        self.ff_mult * self.d_model
    }

    /// Width of the second hidden layer of the classifier head (`d/4`, at least 1).
    pub fn head_hidden(&self) -> usize {
        (self.d_model / 4).max(1)
    }

    /// Number of trainable parameters implied by the configuration.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let proj = |d_in: usize| d_in * d + d + 2 * d;
        let layer = 4 * d * d + 2 * d + d * self.ff_dim() + self.ff_dim() + self.ff_dim() * d + d + 2 * d;
        let h = self.head_hidden();
        let head = 2 * d * d + d + 2 * d + d * h + h + 2 * h + h * N_CLASSES + N_CLASSES;
        proj(self.d_text) + proj(self.d_image) + self.layers * layer + head
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide_width() {
        let cfg = ArchConfig { d_model: 10, heads: 3, ..ArchConfig::desk(4, 4) };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(ArchConfig::desk(4, 4).validate().is_ok());
        assert!(ArchConfig { dropout: 1.0, ..ArchConfig::desk(4, 4) }.validate().is_err());
    }

    #[test]
    fn hand_counted_parameters() {
        // d_T=5, d_I=3, d=8, L=1, h=2, ff=4:
        // projections 64 + 48, encoder layer 840, head 152 + 22 + 9.
        let cfg = ArchConfig { d_text: 5, d_image: 3, d_model: 8, layers: 1, heads: 2, ff_mult: 4, dropout: 0.0 };
        assert_eq!(cfg.parameter_count(), 1135);
    }
}
