use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Sliding-window attention radius.
    pub window: usize,
    pub max_len: usize,
    /// Longest decoder sequence, `<bos>` and `<eos>` included.
    pub max_comment_len: usize,
    pub vocab_size: usize,
    pub num_aspects: usize,
    pub dropout: f64,
    pub init_std: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ffn_dim: 512,
            window: 32,
            max_len: 512,
            max_comment_len: 64,
            vocab_size: 8000,
            num_aspects: 10,
            dropout: 0.1,
            init_std: 0.02,
            layer_norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks and fast tests.
    pub fn tiny(vocab_size: usize, num_aspects: usize) -> Self {
        Self {
            d_model: 32,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ffn_dim: 64,
            window: 4,
            max_len: 64,
            max_comment_len: 16,
            vocab_size,
            num_aspects,
            dropout: 0.0,
            init_std: 0.2,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.window < 1 {
            return Err(Error::config("attention window must be at least 1"));
        }
        if self.num_aspects < 1 {
            return Err(Error::config("at least one aspect is required"));
        }
        if self.max_len < 4 || self.max_comment_len < 3 {
            return Err(Error::config("max_len / max_comment_len too small"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny(50, 3).validate().unwrap();
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig {
            d_model: 30,
            heads: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            window: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
