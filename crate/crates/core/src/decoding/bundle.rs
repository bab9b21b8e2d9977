use std::path::{Path, PathBuf};

use crate::decoding::{beam_search, DecodeOptions};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tokenizer::{normalize, Tokenizer};
use crate::training::{Checkpoint, TokenizerRef};

/// A model together with the tokenizers on either side.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub src: Tokenizer,
    pub tgt: Tokenizer,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_ref(base: &Path, r: &TokenizerRef) -> Result<Tokenizer> {
    let merges = r.merges.as_ref().map(|m| resolve(base, m));
    Tokenizer::load(r.mode, merges.as_deref(), &resolve(base, &r.vocab))
}

impl ModelBundle {
    pub fn new(config: ModelConfig, params: ModelParams, src: Tokenizer, tgt: Tokenizer) -> Result<Self> {
        if src.vocab_size() != config.src_vocab_size || tgt.vocab_size() != config.tgt_vocab_size {
            return Err(Error::Config(format!(
                "tokenizer vocabularies ({} source, {} target) do not match the model ({} source, {} target)",
                src.vocab_size(),
                tgt.vocab_size(),
                config.src_vocab_size,
                config.tgt_vocab_size
            )));
        }
        params.check_shapes(&config)?;
        Ok(ModelBundle { config, params, src, tgt })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, src: Tokenizer, tgt: Tokenizer) -> Result<Self> {
        ModelBundle::new(ckpt.config, ckpt.params, src, tgt)
    }

    /// Loads a checkpoint and the tokenizer files it references; relative
    /// references are taken from the checkpoint's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let refs = ckpt
            .tokenizers
            .clone()
            .ok_or_else(|| Error::Config(format!("{}: checkpoint has no tokenizer references", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let src = load_ref(base, &refs.src)?;
        let tgt = load_ref(base, &refs.tgt)?;
        ModelBundle::from_checkpoint(ckpt, src, tgt)
    }
}

/// Ranked corrections with their scores. Empty input yields no hypotheses.
pub fn correct_topk(text: &str, bundle: &ModelBundle, opts: &DecodeOptions, k: usize) -> Result<Vec<(String, f64)>> {
    let src = bundle.src.encode(&normalize(text));
    if src.is_empty() {
        return Ok(Vec::new());
    }
    beam_search(&src, &bundle.params, &bundle.config, opts)?
        .into_iter()
        .take(k)
        .map(|d| Ok((bundle.tgt.decode(&d.ids)?, d.score)))
        .collect()
}

/// Encodes, searches, and decodes the best hypothesis. Empty input maps to "".
pub fn correct(text: &str, bundle: &ModelBundle, opts: &DecodeOptions) -> Result<String> {
    Ok(correct_topk(text, bundle, opts, 1)?
        .into_iter()
        .next()
        .map(|(s, _)| s)
        .unwrap_or_default())
}
