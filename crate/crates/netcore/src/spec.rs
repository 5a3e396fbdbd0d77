use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NetError, Result};

/// Activation applied elementwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// Tanh approximation of the Gaussian error linear unit.
    Gelu,
}

/// One layer of a [`NetSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Affine map `x W + b` followed by an activation.
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    LayerNorm {
        width: usize,
    },
    /// Row-wise softmax (no parameters).
    Softmax {
        width: usize,
    },
    /// Adds fixed sinusoidal encodings indexed by row position.
    PositionalEncoding {
        width: usize,
    },
    /// Multi-head self-attention over the rows of the input.
    SelfAttention {
        width: usize,
        heads: usize,
    },
    /// Post-norm transformer encoder block: attention and a GELU
    /// feed-forward sublayer, each wrapped in a residual connection and
    /// layer norm.
    EncoderBlock {
        width: usize,
        heads: usize,
        ff_width: usize,
    },
}

impl LayerSpec {
    pub fn input_width(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, .. } => input,
            LayerSpec::LayerNorm { width }
            | LayerSpec::Softmax { width }
            | LayerSpec::PositionalEncoding { width }
            | LayerSpec::SelfAttention { width, .. }
            | LayerSpec::EncoderBlock { width, .. } => width,
        }
    }

    pub fn output_width(&self) -> usize {
        match *self {
            LayerSpec::Dense { output, .. } => output,
            _ => self.input_width(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(NetError::InvalidSpec(format!("layer {index}: {msg}")));
        if self.input_width() == 0 || self.output_width() == 0 {
            return bad("zero width".into());
        }
        match *self {
            LayerSpec::SelfAttention { width, heads }
            | LayerSpec::EncoderBlock { width, heads, .. } => {
                if heads == 0 || width % heads != 0 {
                    return bad(format!("head count {heads} does not divide width {width}"));
                }
            }
            _ => {}
        }
        if let LayerSpec::EncoderBlock { ff_width: 0, .. } = self {
            return bad("zero feed-forward width".into());
        }
        Ok(())
    }
}

/// Architecture description plus the initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl NetSpec {
    pub fn new(layers: Vec<LayerSpec>, seed: u64) -> Self {
        Self { layers, seed }
    }

    /// Dense stack `input -> hidden... -> output` with `hidden_act` between
    /// layers and `output_act` on the last.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        seed: u64,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                input: prev,
                output: h,
                activation: hidden_act,
            });
            prev = h;
        }
        layers.push(LayerSpec::Dense {
            input: prev,
            output,
            activation: output_act,
        });
        Self { layers, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(NetError::InvalidSpec("no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate(i)?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if a.output_width() != b.input_width() {
                return Err(NetError::InvalidSpec(format!(
                    "layer {} outputs width {} but layer {} expects {}",
                    i,
                    a.output_width(),
                    i + 1,
                    b.input_width()
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map(LayerSpec::input_width).unwrap_or(0)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(LayerSpec::output_width).unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("NetSpec serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_incompatible_widths() {
        let spec = NetSpec::new(
            vec![
                LayerSpec::Dense {
                    input: 3,
                    output: 4,
                    activation: Activation::Relu,
                },
                LayerSpec::LayerNorm { width: 5 },
            ],
            0,
        );
        assert!(matches!(spec.validate(), Err(NetError::InvalidSpec(_))));
    }

    #[test]
    fn rejects_indivisible_heads() {
        let spec = NetSpec::new(vec![LayerSpec::SelfAttention { width: 6, heads: 4 }], 0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn hash_depends_on_seed() {
        let a = NetSpec::mlp(2, &[3], 1, Activation::Relu, Activation::Identity, 1);
        let b = NetSpec { seed: 2, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
