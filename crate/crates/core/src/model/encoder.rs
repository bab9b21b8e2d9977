use crate::error::{Error, Result};
use crate::model::attention::project_keys;
use crate::model::cell::{cell_backward, cell_step, CellCache};
use crate::model::{CellParams, CellVariant, Gradients, ModelConfig, ModelParams};
use crate::numerics::Matrix;
use crate::tokenizer::TokenId;

/// Encoder output for one source sequence.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Top-layer states, one row per source position (T x enc_out).
    pub states: Matrix,
    /// Attention keys `W_h h_j + b_a` (T x attn).
    pub keys: Matrix,
    /// Top-layer state at the last position.
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayerCache {
    forward: Vec<CellCache>,
    /// Indexed by source position, not by processing order.
    backward: Option<Vec<CellCache>>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    layers: Vec<EncoderLayerCache>,
}

impl EncoderCache {
    pub(crate) fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

fn run_direction(inputs: &[Vec<f64>], cell: &CellParams, variant: CellVariant, reverse: bool) -> Vec<CellCache> {
    let hidden = cell.hidden_dim();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches: Vec<Option<CellCache>> = vec![None; inputs.len()];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..inputs.len()).rev())
    } else {
        Box::new(0..inputs.len())
    };
    for t in order {
        let step = cell_step(&inputs[t], &h, &c, cell, variant);
        h.clone_from(&step.h);
        c.clone_from(&step.c);
        caches[t] = Some(step);
    }
    caches.into_iter().map(|c| c.expect("every position visited")).collect()
}

pub(crate) fn encode_with_cache(
    src: &[TokenId],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Encoded, EncoderCache)> {
    if src.is_empty() {
        return Err(Error::Input("cannot encode an empty source sequence".into()));
    }
    if let Some(&bad) = src.iter().find(|&&id| id as usize >= config.src_vocab_size) {
        return Err(Error::Input(format!(
            "source id {bad} out of range for vocabulary of size {}",
            config.src_vocab_size
        )));
    }
    let mut inputs: Vec<Vec<f64>> = src
        .iter()
        .map(|&id| params.src_embedding.row(id as usize).to_vec())
        .collect();
    let mut layers = Vec::with_capacity(params.encoder.len());
    for layer in &params.encoder {
        let forward = run_direction(&inputs, &layer.forward, config.cell, false);
        let backward = layer
            .backward
            .as_ref()
            .map(|cell| run_direction(&inputs, cell, config.cell, true));
        inputs = match &backward {
            Some(bwd) => forward
                .iter()
                .zip(bwd)
                .map(|(f, b)| [f.h.as_slice(), b.h.as_slice()].concat())
                .collect(),
            None => forward.iter().map(|f| f.h.clone()).collect(),
        };
        layers.push(EncoderLayerCache { forward, backward });
    }
    let states = Matrix::from_rows(&inputs)?;
    let keys = project_keys(&states, &params.attention);
    let final_state = inputs.pop().expect("nonempty source");
    Ok((
        Encoded {
            states,
            keys,
            final_state,
        },
        EncoderCache { layers },
    ))
}

/// Runs the stacked encoder over a source sequence.
///
/// The first layer reads the embedded tokens left-to-right and right-to-left
/// with independent cells and concatenates the two states per position; the
/// remaining layers are unidirectional.
pub fn encode(src: &[TokenId], params: &ModelParams, config: &ModelConfig) -> Result<Encoded> {
    encode_with_cache(src, params, config).map(|(e, _)| e)
}

fn direction_backward(
    caches: &[CellCache],
    douts: &[&[f64]],
    cell: &CellParams,
    variant: CellVariant,
    reverse: bool,
    grads: &mut CellParams,
    dinputs: &mut [Vec<f64>],
) {
    let hidden = cell.hidden_dim();
    let mut dh = vec![0.0; hidden];
    let mut dc = vec![0.0; hidden];
    // Backward visits positions opposite to the forward processing order.
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new(0..caches.len())
    } else {
        Box::new((0..caches.len()).rev())
    };
    for t in order {
        for (d, &o) in dh.iter_mut().zip(douts[t]) {
            *d += o;
        }
        let back = cell_backward(&caches[t], cell, variant, &dh, &dc, grads);
        for (d, v) in dinputs[t].iter_mut().zip(&back.dx) {
            *d += v;
        }
        dh = back.dh_prev;
        dc = back.dc_prev;
    }
}

/// Backpropagates gradients of the top-layer states (T x enc_out) down to
/// the source embeddings.
pub(crate) fn encoder_backward(
    cache: &EncoderCache,
    src: &[TokenId],
    d_states: &Matrix,
    params: &ModelParams,
    config: &ModelConfig,
    grads: &mut Gradients,
) {
    let t_len = src.len();
    let mut douts: Vec<Vec<f64>> = (0..t_len).map(|t| d_states.row(t).to_vec()).collect();
    for (l, (layer_cache, layer)) in cache.layers.iter().zip(&params.encoder).enumerate().rev() {
        let in_dim = config.encoder_input_dim(l);
        let mut dinputs = vec![vec![0.0; in_dim]; t_len];
        let glayer = &mut grads.encoder[l];
        match (&layer_cache.backward, &layer.backward, &mut glayer.backward) {
            (Some(bwd_cache), Some(bwd), Some(gbwd)) => {
                let h = config.hidden_dim;
                let fwd_out: Vec<&[f64]> = douts.iter().map(|d| &d[..h]).collect();
                let bwd_out: Vec<&[f64]> = douts.iter().map(|d| &d[h..]).collect();
                direction_backward(&layer_cache.forward, &fwd_out, &layer.forward, config.cell, false, &mut glayer.forward, &mut dinputs);
                direction_backward(bwd_cache, &bwd_out, bwd, config.cell, true, gbwd, &mut dinputs);
            }
            _ => {
                let out: Vec<&[f64]> = douts.iter().map(Vec::as_slice).collect();
                direction_backward(&layer_cache.forward, &out, &layer.forward, config.cell, false, &mut glayer.forward, &mut dinputs);
            }
        }
        douts = dinputs;
    }
    for (&id, d) in src.iter().zip(&douts) {
        for (g, v) in grads.src_embedding.row_mut(id as usize).iter_mut().zip(d) {
            *g += v;
        }
    }
}
