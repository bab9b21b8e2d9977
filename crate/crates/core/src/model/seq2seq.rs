use crate::error::{Error, Result};
use crate::model::attention::{attention_backward, keys_backward};
use crate::model::cell::cell_backward;
use crate::model::decoder::{decoder_init, step_unchecked, DecoderStepCache};
use crate::model::encoder::{encode_with_cache, encoder_backward, EncoderCache};
use crate::model::{CellVariant, Encoded, Gradients, ModelConfig, ModelParams};
use crate::numerics::{log_softmax_in_place, Matrix};
use crate::tokenizer::{TokenId, BOS, EOS};

/// Everything a teacher-forced forward pass computed, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    src: Vec<TokenId>,
    targets: Vec<TokenId>,
    cell: CellVariant,
    encoder: EncoderCache,
    encoded: Encoded,
    steps: Vec<DecoderStepCache>,
    /// Log-probabilities over the target vocabulary at each step.
    log_probs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn encoded(&self) -> &Encoded {
        &self.encoded
    }

    /// Attention weights of every decoder step.
    pub fn attention_weights(&self) -> impl Iterator<Item = &[f64]> {
        self.steps.iter().map(|s| s.attention.weights.as_slice())
    }

    /// Summed negative log-likelihood of the targets.
    pub fn nll_sum(&self) -> f64 {
        self.log_probs
            .iter()
            .zip(&self.targets)
            .map(|(lp, &t)| -lp[t as usize])
            .sum()
    }
}

/// Runs the decoder with `inputs[i]` fed at step `i` and scores `targets[i]`.
pub(crate) fn teacher_forced(
    src: &[TokenId],
    inputs: &[TokenId],
    targets: &[TokenId],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<ForwardCache> {
    debug_assert_eq!(inputs.len(), targets.len());
    if let Some(&bad) = inputs
        .iter()
        .chain(targets)
        .find(|&&id| id as usize >= config.tgt_vocab_size)
    {
        return Err(Error::Input(format!(
            "target id {bad} out of range for vocabulary of size {}",
            config.tgt_vocab_size
        )));
    }
    let (encoded, encoder) = encode_with_cache(src, params, config)?;
    let mut state = decoder_init(&encoded.final_state, params)?;
    let mut steps = Vec::with_capacity(inputs.len());
    let mut log_probs = Vec::with_capacity(inputs.len());
    for &y_prev in inputs {
        let (mut logits, next, cache) = step_unchecked(y_prev, &state, &encoded, params, config);
        log_softmax_in_place(&mut logits);
        log_probs.push(logits);
        steps.push(cache);
        state = next;
    }
    Ok(ForwardCache {
        src: src.to_vec(),
        targets: targets.to_vec(),
        cell: config.cell,
        encoder,
        encoded,
        steps,
        log_probs,
    })
}

/// Teacher-forced mean negative log-likelihood of `tgt` followed by `</s>`.
///
/// The decoder is fed `<s>, y_1, ..., y_n` and predicts `y_1, ..., y_n, </s>`;
/// the loss averages over those `n + 1` predictions.
pub fn forward_loss(
    src: &[TokenId],
    tgt: &[TokenId],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(f64, ForwardCache)> {
    if tgt.is_empty() {
        return Err(Error::Input("target sequence is empty".into()));
    }
    let (inputs, targets) = shifted(tgt, true);
    let cache = teacher_forced(src, &inputs, &targets, params, config)?;
    let loss = cache.nll_sum() / targets.len() as f64;
    Ok((loss, cache))
}

/// Decoder inputs and prediction targets for a token sequence.
pub(crate) fn shifted(tokens: &[TokenId], terminated: bool) -> (Vec<TokenId>, Vec<TokenId>) {
    let mut inputs = Vec::with_capacity(tokens.len() + 1);
    inputs.push(BOS);
    inputs.extend_from_slice(tokens);
    let mut targets = tokens.to_vec();
    if terminated {
        targets.push(EOS);
    } else {
        inputs.pop();
    }
    (inputs, targets)
}

/// Log-probability of `tokens` given `src`, including the closing `</s>`
/// when `terminated`.
pub fn sequence_logprob(
    src: &[TokenId],
    tokens: &[TokenId],
    terminated: bool,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<f64> {
    let (inputs, targets) = shifted(tokens, terminated);
    if targets.is_empty() {
        return Ok(0.0);
    }
    Ok(-teacher_forced(src, &inputs, &targets, params, config)?.nll_sum())
}

/// Exact gradient of [`forward_loss`] with respect to every parameter.
pub fn backward(cache: &ForwardCache, params: &ModelParams) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    let scale = 1.0 / cache.num_targets().max(1) as f64;
    accumulate_gradients(cache, params, scale, &mut grads)?;
    Ok(grads)
}

/// Adds `scale ×` the gradient of the summed target NLL into `grads`.
pub(crate) fn accumulate_gradients(
    cache: &ForwardCache,
    params: &ModelParams,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    if cache.steps.is_empty() || cache.steps.len() != cache.targets.len() {
        return Err(Error::State("forward cache holds no decoder steps".into()));
    }
    if params.decoder.len() != cache.steps[0].cells.len()
        || params.encoder.len() != cache.encoder_layers()
    {
        return Err(Error::State("forward cache was produced by a different model".into()));
    }
    let config = cache.reconstruct_config(params);
    let layers = params.decoder.len();
    let top = layers - 1;
    let hidden = config.hidden_dim;
    let enc = &cache.encoded;
    let mut dh = vec![vec![0.0; hidden]; layers];
    let mut dc = vec![vec![0.0; hidden]; layers];
    let mut d_states = Matrix::zeros(enc.states.rows(), enc.states.cols());
    let mut d_keys = Matrix::zeros(enc.keys.rows(), enc.keys.cols());
    let embed = config.embed_dim;

    for (i, step) in cache.steps.iter().enumerate().rev() {
        let mut dlogits: Vec<f64> = cache.log_probs[i].iter().map(|lp| scale * lp.exp()).collect();
        dlogits[cache.targets[i] as usize] -= scale;
        let top_h = &step.cells[top].h;
        grads.output_w.add_outer(&dlogits, top_h);
        grads.output_b.add_flat(&dlogits);
        params.output_w.matvec_t_add(&dlogits, &mut dh[top]);

        let mut d_context = Vec::new();
        for l in (0..layers).rev() {
            let back = cell_backward(&step.cells[l], &params.decoder[l], cache.cell, &dh[l], &dc[l], &mut grads.decoder[l]);
            dh[l] = back.dh_prev;
            dc[l] = back.dc_prev;
            if l > 0 {
                for (d, v) in dh[l - 1].iter_mut().zip(&back.dx) {
                    *d += v;
                }
            } else {
                let row = grads.tgt_embedding.row_mut(step.y_prev as usize);
                for (g, v) in row.iter_mut().zip(&back.dx[..embed]) {
                    *g += v;
                }
                d_context = back.dx[embed..].to_vec();
            }
        }
        let d_query = attention_backward(
            &step.attention,
            enc,
            &params.attention,
            &d_context,
            &mut grads.attention,
            &mut d_states,
            &mut d_keys,
        );
        for (d, v) in dh[top].iter_mut().zip(&d_query) {
            *d += v;
        }
    }

    // s_0 = U h_final
    grads.bridge.add_outer(&dh[top], &enc.final_state);
    let last = enc.states.rows() - 1;
    params.bridge.matvec_t_add(&dh[top], d_states.row_mut(last));
    keys_backward(enc, &params.attention, &d_keys, &mut grads.attention, &mut d_states);
    encoder_backward(&cache.encoder, &cache.src, &d_states, params, &config, grads);
    Ok(())
}

impl ForwardCache {
    fn encoder_layers(&self) -> usize {
        self.encoder.num_layers()
    }

    /// Dimensions needed by the backward pass, read off the parameters.
    fn reconstruct_config(&self, params: &ModelParams) -> ModelConfig {
        ModelConfig {
            src_vocab_size: params.src_embedding.rows(),
            tgt_vocab_size: params.tgt_embedding.rows(),
            embed_dim: params.src_embedding.cols(),
            hidden_dim: params.bridge.rows(),
            attention_dim: params.attention.w_s.rows(),
            encoder_layers: params.encoder.len(),
            decoder_layers: params.decoder.len(),
            cell: self.cell,
            seed: 0,
        }
    }
}
