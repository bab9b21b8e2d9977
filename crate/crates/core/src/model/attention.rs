use crate::error::{Error, Result};
use crate::model::{AttentionParams, Encoded};
use crate::numerics::{dot, softmax_in_place, Matrix};

/// Intermediate values of one attention read.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// Decoder state the scores were conditioned on.
    pub query: Vec<f64>,
    /// `tanh(W_s s + W_h h_j + b_a)` for every source position `j` (T x attn).
    pub hidden: Matrix,
    /// Scalar alignment scores `a_j`.
    pub scores: Vec<f64>,
    /// Normalized weights `λ_j`.
    pub weights: Vec<f64>,
    /// Context `c = Σ_j λ_j h_j`.
    pub context: Vec<f64>,
}

/// Projects encoder states into alignment space: row `j` is `W_h h_j + b_a`.
pub(crate) fn project_keys(states: &Matrix, p: &AttentionParams) -> Matrix {
    let attn = p.w_h.rows();
    let mut keys = Matrix::zeros(states.rows(), attn);
    for j in 0..states.rows() {
        let row = keys.row_mut(j);
        row.copy_from_slice(p.b_a.as_slice());
        p.w_h.matvec_add(states.row(j), row);
    }
    keys
}

pub(crate) fn attend_step(query: &[f64], enc: &Encoded, p: &AttentionParams) -> AttentionCache {
    let t_len = enc.states.rows();
    let q = p.w_s.matvec(query);
    let mut hidden = Matrix::zeros(t_len, q.len());
    let mut scores = Vec::with_capacity(t_len);
    for j in 0..t_len {
        let row = hidden.row_mut(j);
        for ((e, &k), &qv) in row.iter_mut().zip(enc.keys.row(j)).zip(&q) {
            *e = (k + qv).tanh();
        }
        scores.push(dot(p.v_a.as_slice(), hidden.row(j)));
    }
    let mut weights = scores.clone();
    softmax_in_place(&mut weights);
    let mut context = vec![0.0; enc.states.cols()];
    for (j, &w) in weights.iter().enumerate() {
        for (c, &h) in context.iter_mut().zip(enc.states.row(j)) {
            *c += w * h;
        }
    }
    AttentionCache {
        query: query.to_vec(),
        hidden,
        scores,
        weights,
        context,
    }
}

/// Attention read over encoder states `h` (T x enc_out) given the previous
/// decoder state; returns the context (enc_out x 1) and weights (1 x T).
pub fn attend(s_prev: &Matrix, h: &Matrix, p: &AttentionParams) -> Result<(Matrix, Matrix, AttentionCache)> {
    if h.rows() == 0 {
        return Err(Error::Input("attention over an empty source".into()));
    }
    if h.cols() != p.w_h.cols() {
        return Err(Error::shape("attend H", h.shape(), (h.rows(), p.w_h.cols())));
    }
    if s_prev.shape() != (p.w_s.cols(), 1) {
        return Err(Error::shape("attend s_prev", s_prev.shape(), (p.w_s.cols(), 1)));
    }
    let enc = Encoded {
        keys: project_keys(h, p),
        final_state: h.row(h.rows() - 1).to_vec(),
        states: h.clone(),
    };
    let cache = attend_step(s_prev.as_slice(), &enc, p);
    Ok((
        Matrix::column(&cache.context),
        Matrix::row_vector(&cache.weights),
        cache,
    ))
}

/// Backpropagates a context gradient through one attention read.
///
/// Encoder-state gradients flowing through the weighted sum go into
/// `d_states`; gradients reaching the projected keys go into `d_keys` (to be
/// pushed through `W_h` once per sequence by [`keys_backward`]). Returns the
/// gradient with respect to the query state.
pub(crate) fn attention_backward(
    cache: &AttentionCache,
    enc: &Encoded,
    p: &AttentionParams,
    d_context: &[f64],
    grads: &mut AttentionParams,
    d_states: &mut Matrix,
    d_keys: &mut Matrix,
) -> Vec<f64> {
    let t_len = enc.states.rows();
    let mut d_weights = Vec::with_capacity(t_len);
    for j in 0..t_len {
        d_weights.push(dot(d_context, enc.states.row(j)));
        let w = cache.weights[j];
        for (d, &dc) in d_states.row_mut(j).iter_mut().zip(d_context) {
            *d += w * dc;
        }
    }
    let weighted: f64 = cache.weights.iter().zip(&d_weights).map(|(w, d)| w * d).sum();
    let v = p.v_a.as_slice();
    let mut d_q = vec![0.0; v.len()];
    for j in 0..t_len {
        let d_score = cache.weights[j] * (d_weights[j] - weighted);
        if d_score == 0.0 {
            continue;
        }
        let e = cache.hidden.row(j);
        for (g, &ev) in grads.v_a.as_mut_slice().iter_mut().zip(e) {
            *g += d_score * ev;
        }
        let dk = d_keys.row_mut(j);
        for k in 0..v.len() {
            let d_pre = d_score * v[k] * (1.0 - e[k] * e[k]);
            dk[k] += d_pre;
            d_q[k] += d_pre;
        }
    }
    grads.w_s.add_outer(&d_q, &cache.query);
    let mut d_query = vec![0.0; cache.query.len()];
    p.w_s.matvec_t_add(&d_q, &mut d_query);
    d_query
}

/// Pushes accumulated key gradients through `W_h h_j + b_a`.
pub(crate) fn keys_backward(
    enc: &Encoded,
    p: &AttentionParams,
    d_keys: &Matrix,
    grads: &mut AttentionParams,
    d_states: &mut Matrix,
) {
    for j in 0..enc.states.rows() {
        let dk = d_keys.row(j);
        grads.w_h.add_outer(dk, enc.states.row(j));
        grads.b_a.add_flat(dk);
        p.w_h.matvec_t_add(dk, d_states.row_mut(j));
    }
}
