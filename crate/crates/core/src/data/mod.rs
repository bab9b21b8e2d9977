//! Spelling pairs: file I/O, synthetic corruption, splits and evaluation.

mod eval;
mod noise;
mod pairs;
mod split;

pub use eval::{evaluate, EvalRecord, EvalReport};
pub use noise::{
    corrupt, damerau_levenshtein, make_synthetic_dataset, qwerty_neighbors, NoiseSpec, OpWeights,
    DEFAULT_IDENTITY_FRACTION,
};
pub use pairs::{load_pairs, pairs_to_tsv, parse_pairs, save_pairs, SpellPair};
pub use split::{split, split_sizes, SplitMode};
