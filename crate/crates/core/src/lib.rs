//! Spelling correction as sequence transduction.
//!
//! A misspelled query is encoded by a stacked LSTM (bidirectional first
//! layer), an additive attention model builds a context vector at every
//! decoder step, and a stacked LSTM decoder emits subword or character
//! tokens of the corrected query. Everything, including backpropagation,
//! is implemented directly on [`numerics::Matrix`].

pub mod data;
pub mod decoding;
pub mod error;
pub mod model;
pub mod numerics;
#[cfg(test)]
mod properties;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
