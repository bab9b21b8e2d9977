use crate::error::{Error, Result};
use crate::model::attention::{attend_step, AttentionCache};
use crate::model::cell::{cell_step, CellCache};
use crate::model::{Encoded, ModelConfig, ModelParams};
use crate::numerics::Matrix;
use crate::tokenizer::TokenId;

/// Recurrent state of the stacked decoder, bottom layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl DecoderState {
    /// State of the top layer, which also serves as the attention query.
    pub fn top(&self) -> &[f64] {
        self.h.last().expect("decoder has at least one layer")
    }
}

/// Initial decoder state: the top layer starts at `U h_final`, every other
/// hidden state and all cell states at zero.
pub fn decoder_init(h_final: &[f64], params: &ModelParams) -> Result<DecoderState> {
    let u = &params.bridge;
    if h_final.len() != u.cols() {
        return Err(Error::shape("decoder_init", (h_final.len(), 1), (u.cols(), 1)));
    }
    let hidden = u.rows();
    let layers = params.decoder.len();
    let mut h = vec![vec![0.0; hidden]; layers];
    h[layers - 1] = u.matvec(h_final);
    Ok(DecoderState {
        h,
        c: vec![vec![0.0; hidden]; layers],
    })
}

/// Everything one decoder step computed.
#[derive(Debug, Clone)]
pub struct DecoderStepCache {
    pub y_prev: TokenId,
    pub attention: AttentionCache,
    /// One per decoder layer, bottom first.
    pub cells: Vec<CellCache>,
}

pub(crate) fn step_unchecked(
    y_prev: TokenId,
    state: &DecoderState,
    enc: &Encoded,
    params: &ModelParams,
    config: &ModelConfig,
) -> (Vec<f64>, DecoderState, DecoderStepCache) {
    let attention = attend_step(state.top(), enc, &params.attention);
    let mut input = [params.tgt_embedding.row(y_prev as usize), attention.context.as_slice()].concat();
    let mut cells = Vec::with_capacity(params.decoder.len());
    let mut next = DecoderState {
        h: Vec::with_capacity(params.decoder.len()),
        c: Vec::with_capacity(params.decoder.len()),
    };
    for (l, cell) in params.decoder.iter().enumerate() {
        let step = cell_step(&input, &state.h[l], &state.c[l], cell, config.cell);
        input.clone_from(&step.h);
        next.h.push(step.h.clone());
        next.c.push(step.c.clone());
        cells.push(step);
    }
    let mut logits = params.output_b.as_slice().to_vec();
    params.output_w.matvec_add(next.top(), &mut logits);
    (
        logits,
        next,
        DecoderStepCache {
            y_prev,
            attention,
            cells,
        },
    )
}

/// One decoder step: attend with the previous top state, feed
/// `[embed(y_prev); context]` through the stacked cells, and project the new
/// top state to unnormalized scores over the target vocabulary (1 x V).
pub fn decode_step(
    y_prev: TokenId,
    state: &DecoderState,
    enc: &Encoded,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Matrix, DecoderState, DecoderStepCache)> {
    if y_prev as usize >= config.tgt_vocab_size {
        return Err(Error::Input(format!(
            "target id {y_prev} out of range for vocabulary of size {}",
            config.tgt_vocab_size
        )));
    }
    if state.h.len() != params.decoder.len() || state.top().len() != config.hidden_dim {
        return Err(Error::State("decoder state does not match the model".into()));
    }
    let (logits, next, cache) = step_unchecked(y_prev, state, enc, params, config);
    Ok((Matrix::row_vector(&logits), next, cache))
}
