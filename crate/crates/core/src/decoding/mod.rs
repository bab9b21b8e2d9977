//! Greedy and beam-search decoding, and text-level correction.

mod beam;
mod bundle;

pub use beam::{beam_search, greedy_decode, DecodeOptions, Decoded, LengthNorm};
pub use bundle::{correct, correct_topk, ModelBundle};
