use proptest::prelude::*;

use crate::data::{
    damerau_levenshtein, corrupt, pairs_to_tsv, parse_pairs, split, split_sizes, NoiseSpec, SpellPair, SplitMode,
};
use crate::decoding::{beam_search, DecodeOptions, LengthNorm};
use crate::model::{
    attend, cell_forward, forward_loss, backward, sequence_logprob, AttentionParams, CellParams, CellVariant,
    ModelConfig, ModelParams,
};
use crate::numerics::{softmax_in_place, Matrix, Rng};
use crate::tokenizer::{normalize, TokenId, TokenSeq, Tokenizer, TokenizerMode, NUM_SPECIALS};
use crate::training::{
    batched_loss_and_grads, clip_gradients, global_norm, Batch, Checkpoint, OptimizerConfig, OptimizerState,
};

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.uniform(-scale, scale)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

fn small_model(seed: u64, vocab: usize, cell: CellVariant, enc: usize, dec: usize) -> (ModelConfig, ModelParams) {
    let config = ModelConfig {
        encoder_layers: enc,
        decoder_layers: dec,
        cell,
        seed,
        ..ModelConfig::new(vocab, vocab, 4, 5)
    };
    let params = ModelParams::init(&config).unwrap();
    (config, params)
}

fn ids(vocab: usize, min: usize, max: usize) -> impl Strategy<Value = Vec<TokenId>> {
    prop::collection::vec(NUM_SPECIALS as TokenId..vocab as TokenId, min..=max)
}

fn cell_variant() -> impl Strategy<Value = CellVariant> {
    prop_oneof![
        Just(CellVariant::PaperCifg),
        Just(CellVariant::StandardLstm),
        Just(CellVariant::SimpleTanhRnn)
    ]
}

fn word() -> impl Strategy<Value = String> {
    "[a-e0-2]{1,7}"
}

fn query() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0) {
        let mut p = v.clone();
        softmax_in_place(&mut p);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let mut q: Vec<f64> = v.iter().map(|x| x + shift).collect();
        softmax_in_place(&mut q);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn attention_weights_form_a_convex_combination(
        seed in any::<u64>(), t in 1usize..9, enc in 1usize..6, attn in 1usize..6, dec in 1usize..6, scale in 0.1f64..5.0,
    ) {
        let mut rng = Rng::new(seed);
        let p = AttentionParams {
            w_s: random_matrix(attn, dec, scale, &mut rng),
            w_h: random_matrix(attn, enc, scale, &mut rng),
            b_a: random_matrix(attn, 1, scale, &mut rng),
            v_a: random_matrix(attn, 1, scale, &mut rng),
        };
        let h = random_matrix(t, enc, 3.0, &mut rng);
        let s = random_matrix(dec, 1, 3.0, &mut rng);
        let (context, weights, _) = attend(&s, &h, &p).unwrap();
        prop_assert_eq!(weights.shape(), (1, t));
        prop_assert!((weights.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(weights.as_slice().iter().all(|&w| w >= 0.0));
        for k in 0..enc {
            let col: Vec<f64> = (0..t).map(|j| h.get(j, k)).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let c = context.get(k, 0);
            prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
        }
    }

    #[test]
    fn tied_standard_lstm_equals_coupled_cell(seed in any::<u64>(), input in 1usize..6, hidden in 1usize..6) {
        let mut rng = Rng::new(seed);
        let cifg = CellParams::init(CellVariant::PaperCifg, input, hidden, &mut rng);
        let mut tied = cifg.clone();
        // gate order is i, o, f, c
        let f = tied.gates[2].clone();
        tied.gates[0].w = f.w.map(|x| -x);
        tied.gates[0].u = f.u.map(|x| -x);
        tied.gates[0].b = f.b.map(|x| -x);
        let x = random_matrix(input, 1, 2.0, &mut rng);
        let h0 = random_matrix(hidden, 1, 1.0, &mut rng);
        let c0 = random_matrix(hidden, 1, 2.0, &mut rng);
        let (h_a, c_a, _) = cell_forward(&x, &h0, &c0, &cifg, CellVariant::PaperCifg).unwrap();
        let (h_b, c_b, _) = cell_forward(&x, &h0, &c0, &tied, CellVariant::StandardLstm).unwrap();
        prop_assert_eq!(h_a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        h_b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(c_a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        c_b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn bpe_round_trips_training_lines(corpus in prop::collection::vec(query(), 1..12), merges in 0usize..60) {
        let tok = Tokenizer::train(&corpus, TokenizerMode::Bpe, merges).unwrap();
        for line in &corpus {
            prop_assert_eq!(tok.decode(&tok.encode(line)).unwrap(), normalize(line));
        }
    }

    #[test]
    fn more_merges_never_lengthen(corpus in prop::collection::vec(query(), 1..12), probe in query()) {
        let full = Tokenizer::train(&corpus, TokenizerMode::Bpe, 80).unwrap();
        let table = full.merges();
        let mut last = usize::MAX;
        for k in 0..=table.len() {
            let prefix = table.prefix(k);
            let n: usize = normalize(&probe).split(' ').map(|w| prefix.segment_word(w).len()).sum();
            prop_assert!(n <= last, "{} merges gave {} tokens after {}", k, n, last);
            last = n;
        }
    }

    #[test]
    fn damerau_matches_reference(a in "[a-d]{0,8}", b in "[a-d]{0,8}") {
        prop_assert_eq!(damerau_levenshtein(&a, &b), strsim::damerau_levenshtein(&a, &b));
    }

    #[test]
    fn corruption_distance_is_bounded(clean in query(), seed in any::<u64>(), min_ops in 1usize..3, extra in 0usize..3) {
        let spec = NoiseSpec { min_ops, max_ops: min_ops + extra, ..NoiseSpec::default() };
        let mut rng = Rng::new(seed);
        let noisy = corrupt(&clean, &spec, &mut rng);
        let d = strsim::damerau_levenshtein(&clean, &noisy);
        prop_assert!(d <= spec.max_ops, "{clean:?} -> {noisy:?} at distance {d}");
        prop_assert!(d >= 1);
        prop_assert!(!noisy.is_empty());
    }

    #[test]
    fn tsv_round_trip(rows in prop::collection::vec((query(), query()), 1..10)) {
        let pairs: Vec<SpellPair> = rows.iter().map(|(n, c)| SpellPair::new(n, c).unwrap()).collect();
        prop_assert_eq!(parse_pairs(&pairs_to_tsv(&pairs), "mem").unwrap(), pairs);
    }

    #[test]
    fn split_partitions_the_input(
        rows in prop::collection::vec((query(), 0usize..6), 3..40), seed in any::<u64>(), disjoint in any::<bool>(),
    ) {
        let clean = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
        let pairs: Vec<SpellPair> = rows.iter().map(|(n, k)| SpellPair::new(n, clean[*k]).unwrap()).collect();
        let mode = if disjoint { SplitMode::CleanDisjoint } else { SplitMode::Random };
        let fractions = [0.6, 0.2, 0.2];
        let (a, b, c) = split(&pairs, fractions, mode, &mut Rng::new(seed)).unwrap();
        let mut all: Vec<SpellPair> = a.iter().chain(&b).chain(&c).cloned().collect();
        let mut orig = pairs.clone();
        all.sort_by(|x, y| (&x.noisy, &x.clean).cmp(&(&y.noisy, &y.clean)));
        orig.sort_by(|x, y| (&x.noisy, &x.clean).cmp(&(&y.noisy, &y.clean)));
        prop_assert_eq!(all, orig);
        if disjoint {
            for (x, y) in [(&a, &b), (&a, &c), (&b, &c)] {
                prop_assert!(x.iter().all(|p| y.iter().all(|q| p.clean != q.clean)));
            }
        } else {
            prop_assert_eq!([a.len(), b.len(), c.len()], split_sizes(pairs.len(), fractions).unwrap());
        }
    }

    #[test]
    fn padding_leaves_batch_loss_and_gradients_unchanged(
        seed in any::<u64>(),
        rows in prop::collection::vec((ids(9, 1, 6), ids(9, 1, 5)), 1..5),
        extra_src in 1usize..4, extra_tgt in 1usize..4, cell in cell_variant(),
    ) {
        let (config, params) = small_model(seed, 9, cell, 2, 1);
        let pairs: Vec<(TokenSeq, TokenSeq)> = rows.into_iter().map(|(s, t)| (s.into(), t.into())).collect();
        let batch = Batch::from_pairs(&pairs).unwrap();
        let mut padded = batch.clone();
        padded.pad_to(batch.src().cols() + extra_src, batch.tgt().cols() + extra_tgt);
        let (l0, g0) = batched_loss_and_grads(&batch, &params, &config).unwrap();
        let (l1, g1) = batched_loss_and_grads(&padded, &params, &config).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-12);
        for ((name, a), (_, b)) in g0.tensors().iter().zip(g1.tensors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn unused_vocabulary_rows_are_inert(
        seed in any::<u64>(), src in ids(8, 1, 5), tgt in ids(8, 1, 4), noise in 0.1f64..3.0,
    ) {
        // ids 8..12 never appear in the sequences
        let (config, params) = small_model(seed, 12, CellVariant::PaperCifg, 2, 1);
        let (loss, cache) = forward_loss(&src, &tgt, &params, &config).unwrap();
        let grads = backward(&cache, &params).unwrap();
        for r in 8..12 {
            prop_assert!(grads.src_embedding.row(r).iter().all(|&g| g == 0.0));
            prop_assert!(grads.tgt_embedding.row(r).iter().all(|&g| g == 0.0));
        }
        let mut perturbed = params.clone();
        let mut rng = Rng::new(seed ^ 1);
        for r in 8..12 {
            for v in perturbed.src_embedding.row_mut(r).iter_mut().chain(perturbed.tgt_embedding.row_mut(r)) {
                *v += rng.uniform(-noise, noise);
            }
        }
        let (loss2, _) = forward_loss(&src, &tgt, &perturbed, &config).unwrap();
        prop_assert_eq!(loss.to_bits(), loss2.to_bits());
    }

    #[test]
    fn beam_results_are_ranked_and_rescorable(
        seed in any::<u64>(), src in ids(7, 1, 5), width in 1usize..6, max_len in 1usize..6, norm in any::<bool>(),
    ) {
        let (config, params) = small_model(seed, 7, CellVariant::PaperCifg, 1, 1);
        let opts = DecodeOptions {
            beam_width: width,
            max_len,
            length_norm: if norm { LengthNorm::DivideByLength } else { LengthNorm::None },
        };
        let out = beam_search(&src, &params, &config, &opts).unwrap();
        prop_assert!(!out.is_empty() && out.len() <= width);
        for w in out.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
        for d in &out {
            prop_assert!(d.ids.len() + usize::from(d.finished) <= max_len);
            let lp = sequence_logprob(&src, &d.ids, d.finished, &params, &config).unwrap();
            prop_assert!((lp - d.logprob).abs() <= 1e-9, "{lp} vs {}", d.logprob);
            prop_assert!(d.logprob <= 0.0);
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), enc in 1usize..4, dec in 1usize..3, cell in cell_variant(), step in any::<u32>()) {
        let (config, params) = small_model(seed, 9, cell, enc, dec);
        let ckpt = Checkpoint {
            optimizer: OptimizerState::new(OptimizerConfig::default(), &params),
            config,
            tokenizers: None,
            params,
            epoch: 3,
            step: step.into(),
        };
        let bytes = ckpt.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back, ckpt);
    }

    #[test]
    fn clipping_caps_the_global_norm(seed in any::<u64>(), scale in 0.01f64..100.0, max_norm in 0.1f64..10.0) {
        let (_, params) = small_model(seed, 9, CellVariant::PaperCifg, 2, 1);
        let mut grads = params.zeros_like();
        let mut rng = Rng::new(seed);
        for (_, m) in grads.tensors_mut() {
            for v in m.as_mut_slice() {
                *v = rng.uniform(-scale, scale);
            }
        }
        let before = global_norm(&grads).unwrap();
        let reported = clip_gradients(&mut grads, max_norm).unwrap();
        let after = global_norm(&grads).unwrap();
        prop_assert_eq!(reported.to_bits(), before.to_bits());
        prop_assert!(after <= max_norm * (1.0 + 1e-12));
        if before <= max_norm {
            prop_assert_eq!(after.to_bits(), before.to_bits());
        }
    }
}
