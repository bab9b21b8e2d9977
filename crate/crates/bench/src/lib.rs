//! Shared fixtures for the benchmarks.

use seqspell::model::{ModelConfig, ModelParams};
use seqspell::numerics::{init_matrix, InitScheme, Matrix, Rng};
use seqspell::tokenizer::TokenId;

/// Seeded model of the given width with 2 encoder layers and 1 decoder layer.
pub fn model(vocab: usize, embed: usize, hidden: usize) -> (ModelConfig, ModelParams) {
    let config = ModelConfig {
        encoder_layers: 2,
        decoder_layers: 1,
        seed: 1,
        ..ModelConfig::new(vocab, vocab, embed, hidden)
    };
    let params = ModelParams::init(&config).expect("valid benchmark config");
    (config, params)
}

/// Non-special token ids, deterministic for a seed.
pub fn tokens(vocab: usize, len: usize, seed: u64) -> Vec<TokenId> {
    let mut rng = Rng::new(seed);
    (0..len).map(|_| (4 + rng.below(vocab - 4)) as TokenId).collect()
}

pub fn square(n: usize, seed: u64) -> Matrix {
    init_matrix(n, n, InitScheme::UniformScaled, &mut Rng::new(seed))
}

pub fn lexicon() -> Vec<String> {
    include_str!("../../core/data/queries.txt").lines().map(str::to_string).collect()
}
