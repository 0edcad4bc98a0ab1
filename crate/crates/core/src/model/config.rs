use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub ln_epsilon: f32,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.n_layers, self.d_model, self.n_heads, self.d_head, self.d_mlp, self.vocab_size];
        if dims.iter().any(|&d| d == 0) {
            return Err(ModelError::Config("all dimensions must be at least 1".into()));
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(ModelError::Config(format!(
                "n_heads ({}) * d_head ({}) != d_model ({})",
                self.n_heads, self.d_head, self.d_model
            )));
        }
        if self.max_seq < 2 {
            return Err(ModelError::Config("max_seq must be at least 2".into()));
        }
        if !(self.ln_epsilon.is_finite() && self.ln_epsilon > 0.0) {
            return Err(ModelError::Config("ln_epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Where in each block the residual is captured and edited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookPoint {
    /// After the attention sublayer's contribution, before the MLP.
    #[default]
    PostAttention,
    /// After the whole block.
    PostBlock,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelConfig {
        ModelConfig { n_layers: 2, d_model: 8, n_heads: 2, d_head: 4, d_mlp: 16, vocab_size: 10, max_seq: 16, ln_epsilon: 1e-5 }
    }

    #[test]
    fn validates() {
        assert!(base().validate().is_ok());
        assert!(ModelConfig { d_head: 3, ..base() }.validate().is_err());
        assert!(ModelConfig { max_seq: 1, ..base() }.validate().is_err());
        assert!(ModelConfig { n_layers: 0, ..base() }.validate().is_err());
    }
}
