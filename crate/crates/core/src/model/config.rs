use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::NUM_SPECIALS;

/// Recurrent cell used throughout encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CellVariant {
    /// Coupled input: `c = f ⊙ c_prev + (1 − f) ⊙ tanh(W_c x + U_c h + b_c)`.
    /// The input gate `i` is evaluated but does not enter the update.
    #[default]
    PaperCifg,
    /// `c = f ⊙ c_prev + i ⊙ tanh(...)`.
    StandardLstm,
    /// `h = tanh(W x + U h_prev + b_h)`.
    SimpleTanhRnn,
}

impl CellVariant {
    pub fn num_gates(self) -> usize {
        match self {
            CellVariant::PaperCifg | CellVariant::StandardLstm => 4,
            CellVariant::SimpleTanhRnn => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the attention alignment layer.
    pub attention_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub cell: CellVariant,
    pub seed: u64,
}

impl ModelConfig {
    /// Configuration with attention width equal to the hidden size.
    pub fn new(src_vocab_size: usize, tgt_vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        ModelConfig {
            src_vocab_size,
            tgt_vocab_size,
            embed_dim,
            hidden_dim,
            attention_dim: hidden_dim,
            encoder_layers: 2,
            decoder_layers: 2,
            cell: CellVariant::PaperCifg,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("src_vocab_size", self.src_vocab_size),
            ("tgt_vocab_size", self.tgt_vocab_size),
        ] {
            if v <= NUM_SPECIALS {
                problems.push(format!(
                    "{name} must exceed the {NUM_SPECIALS} reserved tokens, got {v}"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Width of each encoder output state (rows of `H`).
    pub fn encoder_output_dim(&self) -> usize {
        if self.encoder_layers == 1 {
            2 * self.hidden_dim
        } else {
            self.hidden_dim
        }
    }

    pub(crate) fn encoder_input_dim(&self, layer: usize) -> usize {
        match layer {
            0 => self.embed_dim,
            1 => 2 * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }

    pub(crate) fn decoder_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim + self.encoder_output_dim()
        } else {
            self.hidden_dim
        }
    }
}
