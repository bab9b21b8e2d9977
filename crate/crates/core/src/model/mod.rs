//! Attention encoder-decoder: cells, encoder, attention, decoder, loss and
//! exact gradients.

mod attention;
mod cell;
mod config;
mod decoder;
mod encoder;
mod gradcheck;
mod params;
mod seq2seq;

pub use attention::{attend, AttentionCache};
pub use cell::{cell_forward, CellCache};
pub use config::{CellVariant, ModelConfig};
pub use decoder::{decode_step, decoder_init, DecoderState, DecoderStepCache};
pub use encoder::{encode, Encoded};
pub use gradcheck::{check_gradients, check_gradients_with, GradCheckOptions, GroupCheck};
pub use params::{AttentionParams, CellParams, EncoderLayerParams, GateParams, Gradients, ModelParams};
pub use seq2seq::{backward, forward_loss, sequence_logprob, ForwardCache};

pub(crate) use decoder::step_unchecked;
pub(crate) use seq2seq::{accumulate_gradients, teacher_forced};
