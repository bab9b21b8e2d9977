use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::bpe::{word_counts, MergeTable};
use crate::tokenizer::{TokenId, END_OF_WORD};

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    Character,
    Bpe,
}

/// Bijective token/id map with `<pad>`, `<s>`, `</s>`, `<unk>` at ids 0..3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    mode: TokenizerMode,
}

impl Vocabulary {
    /// Builds a vocabulary from the non-special tokens, in id order.
    pub fn from_tokens(symbols: Vec<String>, mode: TokenizerMode) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(symbols);
        Vocabulary::from_all_tokens(tokens, mode)
    }

    fn from_all_tokens(tokens: Vec<String>, mode: TokenizerMode) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Input(format!(
                    "vocabulary id {i} must be the reserved token {special}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Input(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn mode(&self) -> TokenizerMode {
        self.mode
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str, mode: TokenizerMode, path: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Vocabulary::from_all_tokens(tokens, mode).map_err(|e| Error::Parse {
            path: path.to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, mode: TokenizerMode) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_file_string(&text, mode, &path.display().to_string())
    }
}

/// Builds the vocabulary observed when segmenting `corpus` with `table`.
///
/// Every single character of the corpus, the end-of-word marker and (in BPE
/// mode) every merge product get an id. Ids after the reserved block are
/// assigned by descending corpus frequency, then lexicographically.
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[S],
    table: &MergeTable,
    mode: TokenizerMode,
) -> Result<Vocabulary> {
    let words = word_counts(corpus);
    if words.is_empty() {
        return Err(Error::Input("cannot build a vocabulary from an empty corpus".into()));
    }
    let empty = MergeTable::empty();
    let table = match mode {
        TokenizerMode::Character => &empty,
        TokenizerMode::Bpe => table,
    };
    let mut freq: BTreeMap<String, u64> = BTreeMap::new();
    let mut chars = BTreeSet::new();
    for (word, n) in &words {
        chars.extend(word.chars());
        for sym in table.segment_word(word) {
            *freq.entry(sym).or_insert(0) += n;
        }
    }
    for c in chars {
        freq.entry(c.to_string()).or_insert(0);
    }
    freq.entry(END_OF_WORD.to_string()).or_insert(0);
    for p in table.products() {
        freq.entry(p).or_insert(0);
    }
    for s in SPECIAL_TOKENS {
        freq.remove(s);
    }
    let mut ordered: Vec<(String, u64)> = freq.into_iter().collect();
    // BTreeMap iteration is already lexicographic; a stable sort keeps that within equal counts.
    ordered.sort_by(|a, b| b.1.cmp(&a.1));
    Vocabulary::from_tokens(ordered.into_iter().map(|(t, _)| t).collect(), mode)
}
