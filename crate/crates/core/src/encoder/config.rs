use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest entity-name input, markers included.
pub const MAX_ENTITY_TOKENS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Share one parameter set between the mention and entity encoders.
    pub tie_encoders: bool,
    /// Standard deviation of the normal used for weight initialization.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 128,
            max_seq_len: 512,
            vocab_size: 0,
            seed: 0,
            tie_encoders: false,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("encoder.{name} must be at least 1")));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "encoder.hidden_dim {} is not divisible by encoder.num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.max_seq_len < 3 {
            return Err(Error::Config("encoder.max_seq_len must be at least 3".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("encoder.init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn entity_limit(&self) -> usize {
        MAX_ENTITY_TOKENS.min(self.max_seq_len)
    }
}
