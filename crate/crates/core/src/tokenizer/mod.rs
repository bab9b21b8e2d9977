//! Character and BPE subword tokenization.
//!
//! Text is normalized (lowercased, whitespace collapsed) and split into
//! words; each word becomes its characters followed by the end-of-word
//! marker `</w>`, and BPE merges are then applied in learned order. Character
//! mode is the same pipeline without merges.

mod bpe;
mod vocab;

use std::ops::Deref;
use std::path::Path;

pub use bpe::{learn_bpe, MergeTable};
pub use vocab::{
    build_vocab, TokenizerMode, Vocabulary, BOS, EOS, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK,
};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const END_OF_WORD: &str = "</w>";

/// Lowercases and collapses runs of whitespace to single spaces, trimming the ends.
pub fn normalize(text: &str) -> String {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for w in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// A sequence of vocabulary ids without padding.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSeq(ids)
    }

    pub fn into_vec(self) -> Vec<TokenId> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(v: Vec<TokenId>) -> Self {
        TokenSeq(v)
    }
}

impl FromIterator<TokenId> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

/// A merge table paired with the vocabulary it indexes into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokenizer {
    merges: MergeTable,
    vocab: Vocabulary,
}

impl Tokenizer {
    pub fn new(merges: MergeTable, vocab: Vocabulary) -> Result<Self> {
        if vocab.mode() == TokenizerMode::Character && !merges.is_empty() {
            return Err(Error::Config(
                "character-mode tokenizer cannot carry BPE merges".into(),
            ));
        }
        Ok(Tokenizer { merges, vocab })
    }

    /// Learns merges (none in character mode) and the vocabulary from a corpus.
    pub fn train<S: AsRef<str>>(corpus: &[S], mode: TokenizerMode, num_merges: usize) -> Result<Self> {
        let merges = match mode {
            TokenizerMode::Character => MergeTable::empty(),
            TokenizerMode::Bpe => learn_bpe(corpus, num_merges)?,
        };
        let vocab = build_vocab(corpus, &merges, mode)?;
        Tokenizer::new(merges, vocab)
    }

    /// Loads a vocabulary file and, in BPE mode, its merge-table file.
    pub fn load(mode: TokenizerMode, merges: Option<&Path>, vocab: &Path) -> Result<Self> {
        let table = match (mode, merges) {
            (TokenizerMode::Bpe, Some(p)) => MergeTable::load(p)?,
            (TokenizerMode::Bpe, None) => {
                return Err(Error::Config("BPE tokenizer requires a merges file".into()))
            }
            (TokenizerMode::Character, _) => MergeTable::empty(),
        };
        Tokenizer::new(table, Vocabulary::load(vocab, mode)?)
    }

    /// Writes the vocabulary and, in BPE mode, the merge table.
    pub fn save(&self, merges: Option<&Path>, vocab: &Path) -> Result<()> {
        match (self.mode(), merges) {
            (TokenizerMode::Bpe, Some(p)) => self.merges.save(p)?,
            (TokenizerMode::Bpe, None) => {
                return Err(Error::Config("BPE tokenizer requires a merges path".into()))
            }
            (TokenizerMode::Character, _) => {}
        }
        self.vocab.save(vocab)
    }

    pub fn mode(&self) -> TokenizerMode {
        self.vocab.mode()
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Symbol segmentation of normalized `text`, before id lookup.
    pub fn segment(&self, text: &str) -> Vec<String> {
        normalize(text)
            .split(' ')
            .filter(|w| !w.is_empty())
            .flat_map(|w| self.merges.segment_word(w))
            .collect()
    }

    /// Encodes text; symbols missing from the vocabulary become `<unk>`.
    pub fn encode(&self, text: &str) -> TokenSeq {
        self.segment(text)
            .iter()
            .map(|s| self.vocab.id(s).unwrap_or(UNK))
            .collect()
    }

    /// Concatenates token strings, turning end-of-word markers into spaces.
    /// `<pad>`, `<s>` and `</s>` are dropped; trailing whitespace is removed.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.vocab.token(id).ok_or_else(|| {
                Error::Input(format!(
                    "token id {id} out of range for vocabulary of size {}",
                    self.vocab.len()
                ))
            })?;
            if matches!(id, PAD | BOS | EOS) {
                continue;
            }
            match tok.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    out.push_str(stem);
                    out.push(' ');
                }
                None => out.push_str(tok),
            }
        }
        out.truncate(out.trim_end().len());
        Ok(out)
    }
}
