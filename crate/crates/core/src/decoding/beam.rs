use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{decoder_init, encode, step_unchecked, DecoderState, Encoded, ModelConfig, ModelParams};
use crate::numerics::log_softmax_in_place;
use crate::tokenizer::{TokenId, TokenSeq, BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LengthNorm {
    #[default]
    None,
    DivideByLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    pub beam_width: usize,
    /// Maximum number of generated tokens, `</s>` included.
    pub max_len: usize,
    pub length_norm: LengthNorm,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam_width: 8,
            max_len: 48,
            length_norm: LengthNorm::None,
        }
    }
}

impl DecodeOptions {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.beam_width == 0 {
            problems.push("beam_width must be >= 1");
        }
        if self.max_len == 0 {
            problems.push("max_len must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// A decoded output sequence (after `<s>`, without `</s>`).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub ids: TokenSeq,
    /// Sum of the chosen tokens' log-probabilities, `</s>` included when finished.
    pub logprob: f64,
    /// Ranking score: `logprob`, or `logprob / length` under length normalization.
    pub score: f64,
    /// False when the hypothesis hit `max_len` without emitting `</s>`.
    pub finished: bool,
}

fn length_score(logprob: f64, generated: usize, norm: LengthNorm) -> f64 {
    match norm {
        LengthNorm::None => logprob,
        LengthNorm::DivideByLength => logprob / generated.max(1) as f64,
    }
}

fn prepare(src: &[TokenId], params: &ModelParams, config: &ModelConfig) -> Result<(Encoded, DecoderState)> {
    params.check_shapes(config)?;
    let enc = encode(src, params, config)?;
    let state = decoder_init(&enc.final_state, params)?;
    Ok((enc, state))
}

/// Picks the most probable token at each step, lowest id on ties.
pub fn greedy_decode(src: &[TokenId], params: &ModelParams, config: &ModelConfig, max_len: usize) -> Result<Decoded> {
    if max_len == 0 {
        return Err(Error::Input("max_len must be >= 1".into()));
    }
    let (enc, mut state) = prepare(src, params, config)?;
    let mut ids = Vec::new();
    let mut logprob = 0.0;
    let mut y = BOS;
    let mut finished = false;
    for _ in 0..max_len {
        let (mut logits, next, _) = step_unchecked(y, &state, &enc, params, config);
        log_softmax_in_place(&mut logits);
        // compare cumulative sums so ties resolve exactly as in a width-1 beam
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if logprob + v > logprob + logits[best] {
                best = k;
            }
        }
        logprob += logits[best];
        y = best as TokenId;
        if y == EOS {
            finished = true;
            break;
        }
        ids.push(y);
        state = next;
    }
    Ok(Decoded {
        ids: TokenSeq::new(ids),
        logprob,
        score: logprob,
        finished,
    })
}

/// Descending order on finite reals, treating -0.0 and 0.0 as equal.
fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

struct Live {
    ids: Vec<TokenId>,
    logprob: f64,
    state: DecoderState,
}

/// Beam search over a fixed number of slots.
///
/// Every step expands each live hypothesis over the whole target vocabulary
/// and keeps the best `beam_width − finished` candidates by cumulative
/// log-probability (ties: lexicographically smaller ids). A candidate ending
/// in `</s>` is finished and keeps its slot for good. Hypotheses still live
/// after `max_len` steps are returned unfinished. The result is sorted by
/// score, ties broken by ids.
pub fn beam_search(src: &[TokenId], params: &ModelParams, config: &ModelConfig, opts: &DecodeOptions) -> Result<Vec<Decoded>> {
    opts.validate()?;
    let (enc, state0) = prepare(src, params, config)?;
    let mut live = vec![Live {
        ids: Vec::new(),
        logprob: 0.0,
        state: state0,
    }];
    let mut done: Vec<Decoded> = Vec::new();
    let vocab = config.tgt_vocab_size;
    for t in 0..opts.max_len {
        let slots = opts.beam_width - done.len();
        if live.is_empty() || slots == 0 {
            break;
        }
        let mut next_states = Vec::with_capacity(live.len());
        // (cumulative logprob, parent, token)
        let mut cands: Vec<(f64, usize, TokenId)> = Vec::with_capacity(live.len() * vocab);
        for (p, hyp) in live.iter().enumerate() {
            let y = hyp.ids.last().copied().unwrap_or(BOS);
            let (mut logits, next, _) = step_unchecked(y, &hyp.state, &enc, params, config);
            log_softmax_in_place(&mut logits);
            cands.extend(logits.iter().enumerate().map(|(k, &lp)| (hyp.logprob + lp, p, k as TokenId)));
            next_states.push(next);
        }
        // live hypotheses share a length, so (parent ids, token) orders the candidate ids
        let cmp = |a: &(f64, usize, TokenId), b: &(f64, usize, TokenId)| -> Ordering {
            desc(a.0, b.0)
                .then_with(|| live[a.1].ids.cmp(&live[b.1].ids))
                .then(a.2.cmp(&b.2))
        };
        if cands.len() > slots {
            cands.select_nth_unstable_by(slots - 1, cmp);
            cands.truncate(slots);
        }
        cands.sort_by(cmp);
        let mut next_live = Vec::with_capacity(cands.len());
        for (logprob, p, k) in cands {
            let mut ids = live[p].ids.clone();
            if k == EOS {
                let score = length_score(logprob, ids.len() + 1, opts.length_norm);
                done.push(Decoded {
                    ids: TokenSeq::new(ids),
                    logprob,
                    score,
                    finished: true,
                });
            } else {
                ids.push(k);
                next_live.push(Live {
                    ids,
                    logprob,
                    state: next_states[p].clone(),
                });
            }
        }
        live = next_live;
        if t + 1 == opts.max_len {
            for hyp in live.drain(..) {
                let score = length_score(hyp.logprob, hyp.ids.len(), opts.length_norm);
                done.push(Decoded {
                    ids: TokenSeq::new(hyp.ids),
                    logprob: hyp.logprob,
                    score,
                    finished: false,
                });
            }
        }
    }
    done.sort_by(|a, b| desc(a.score, b.score).then_with(|| a.ids[..].cmp(&b.ids[..])));
    Ok(done)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sequence_logprob;
    use crate::numerics::Rng;

    fn model(vocab: usize, seed: u64) -> (ModelConfig, ModelParams) {
        let config = ModelConfig {
            encoder_layers: 1,
            decoder_layers: 1,
            seed,
            ..ModelConfig::new(8, vocab, 4, 6)
        };
        let mut p = ModelParams::init(&config).unwrap();
        // sharper output distributions make the search nontrivial
        p.output_w.scale_in_place(4.0);
        (config, p)
    }

    #[test]
    fn eos_first_gives_empty_output() {
        let (c, mut p) = model(7, 1);
        p.output_b.set(EOS as usize, 0, 1e3);
        let g = greedy_decode(&[4, 5], &p, &c, 10).unwrap();
        assert!(g.ids.is_empty() && g.finished);
        let b = beam_search(&[4, 5], &p, &c, &DecodeOptions::default()).unwrap();
        assert!(b[0].ids.is_empty());
    }

    #[test]
    fn greedy_matches_stepwise_argmax_oracle() {
        let (c, p) = model(9, 2);
        let src = [4u32, 6, 7];
        let g = greedy_decode(&src, &p, &c, 6).unwrap();
        // oracle: extend by each possible next token and keep the best prefix score
        let mut prefix: Vec<TokenId> = Vec::new();
        let mut total = 0.0;
        for _ in 0..6 {
            let base = sequence_logprob(&src, &prefix, false, &p, &c).unwrap();
            let mut best = (f64::NEG_INFINITY, 0);
            for k in 0..9u32 {
                let lp = if k == EOS {
                    sequence_logprob(&src, &prefix, true, &p, &c).unwrap()
                } else {
                    let mut ext = prefix.clone();
                    ext.push(k);
                    sequence_logprob(&src, &ext, false, &p, &c).unwrap()
                } - base;
                if lp > best.0 {
                    best = (lp, k);
                }
            }
            total += best.0;
            if best.1 == EOS {
                break;
            }
            prefix.push(best.1);
        }
        assert_eq!(&g.ids[..], &prefix[..]);
        assert!((g.logprob - total).abs() < 1e-10);
        assert_eq!(g, greedy_decode(&src, &p, &c, 6).unwrap());
    }

    #[test]
    fn width_one_is_greedy() {
        let mut rng = Rng::new(3);
        for seed in 0..10 {
            let (c, p) = model(8, seed);
            let src: Vec<TokenId> = (0..1 + rng.below(5)).map(|_| 4 + rng.below(4) as TokenId).collect();
            let g = greedy_decode(&src, &p, &c, 7).unwrap();
            let opts = DecodeOptions {
                beam_width: 1,
                max_len: 7,
                ..Default::default()
            };
            let b = beam_search(&src, &p, &c, &opts).unwrap();
            assert_eq!(b.len(), 1);
            assert_eq!(b[0], g);
        }
    }

    #[test]
    fn ranked_and_rescorable() {
        let (c, p) = model(9, 4);
        let src = [5u32, 4, 7, 6];
        for norm in [LengthNorm::None, LengthNorm::DivideByLength] {
            let opts = DecodeOptions {
                beam_width: 6,
                max_len: 5,
                length_norm: norm,
            };
            let out = beam_search(&src, &p, &c, &opts).unwrap();
            assert_eq!(out.len(), 6);
            for w in out.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
            for d in &out {
                let lp = sequence_logprob(&src, &d.ids, d.finished, &p, &c).unwrap();
                assert!((lp - d.logprob).abs() <= 1e-10);
                assert!(d.finished || d.ids.len() == 5);
            }
        }
    }

    #[test]
    fn rejects_bad_options() {
        let (c, p) = model(6, 5);
        let opts = DecodeOptions {
            beam_width: 0,
            ..Default::default()
        };
        assert!(matches!(beam_search(&[4], &p, &c, &opts), Err(Error::Config(_))));
        assert!(greedy_decode(&[4], &p, &c, 0).is_err());
        assert!(greedy_decode(&[], &p, &c, 3).is_err());
    }
}
