use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Matrix;
use crate::tokenizer::TokenizerMode;
use crate::training::{OptimizerConfig, OptimizerState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SQSP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a tokenizer's files live. Relative paths are resolved against the
/// checkpoint's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerRef {
    pub mode: TokenizerMode,
    pub merges: Option<PathBuf>,
    pub vocab: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerRefs {
    pub src: TokenizerRef,
    pub tgt: TokenizerRef,
}

/// A trained (or freshly initialized) model with everything needed to
/// resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tokenizers: Option<TokenizerRefs>,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub epoch: u64,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    tokenizers: Option<TokenizerRefs>,
    optimizer: OptimizerConfig,
    optimizer_step: u64,
    epoch: u64,
    step: u64,
    tensors: usize,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::CheckpointFormat(format!("value {v} exceeds 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, m: &Matrix) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, m.rows())?;
    put_u32(out, m.cols())?;
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut named: Vec<(String, &Matrix)> = self.params.tensors();
        if let Some((m, v)) = &self.optimizer.moments {
            named.extend(m.tensors().into_iter().map(|(n, t)| (format!("opt.m.{n}"), t)));
            named.extend(v.tensors().into_iter().map(|(n, t)| (format!("opt.v.{n}"), t)));
        }
        let header = Header {
            model: self.config.clone(),
            tokenizers: self.tokenizers.clone(),
            optimizer: self.optimizer.config.clone(),
            optimizer_step: self.optimizer.step,
            epoch: self.epoch,
            step: self.step,
            tensors: named.len(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::CheckpointFormat(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.params.num_parameters() * 3);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_u32(&mut out, json.len())?;
        out.extend_from_slice(&json);
        for (name, m) in &named {
            put_tensor(&mut out, name, m)?;
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::CheckpointTruncated(format!("{} bytes, header needs 8", bytes.len())));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointFormat("bad magic, not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        match bytes.len().checked_sub(4).map(|end| bytes.split_at(end)) {
            Some((body, tail)) if body.len() >= 8 => {
                let stored = u32::from_le_bytes(tail.try_into().unwrap());
                let computed = crc32fast::hash(body);
                if stored != computed {
                    // a file that ends before its structure does is reported as truncation
                    return Err(match parse_body(bytes) {
                        Err(e @ Error::CheckpointTruncated(_)) => e,
                        Ok((_, end)) if bytes.len() < end + 4 => {
                            Error::CheckpointTruncated("checksum cut short".into())
                        }
                        _ => Error::CheckpointChecksum { stored, computed },
                    });
                }
                match parse_body(body)? {
                    (c, end) if end == body.len() => Ok(c),
                    (_, end) => Err(Error::CheckpointFormat(format!(
                        "{} unexpected trailing bytes",
                        body.len() - end
                    ))),
                }
            }
            _ => Err(Error::CheckpointTruncated("missing checksum".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::CheckpointTruncated(format!("{what} needs {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
}

/// Parses everything after the magic and version; returns the checkpoint and
/// the offset where its structure ends.
fn parse_body(bytes: &[u8]) -> Result<(Checkpoint, usize)> {
    let mut r = Reader { bytes, pos: 8 };
    let json_len = r.u32("config length")?;
    let header: Header = serde_json::from_slice(r.take(json_len, "config block")?)
        .map_err(|e| Error::CheckpointFormat(format!("config block: {e}")))?;
    let mut tensors: HashMap<String, Matrix> = HashMap::with_capacity(header.tensors);
    for _ in 0..header.tensors {
        let name_len = r.u32("tensor name length")?;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::CheckpointFormat("tensor name is not UTF-8".into()))?
            .to_string();
        let rows = r.u32("tensor rows")?;
        let cols = r.u32("tensor cols")?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CheckpointFormat(format!("{name}: absurd shape {rows}x{cols}")))?;
        let data = r
            .take(n, &name)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let m = Matrix::new(rows, cols, data)?;
        if tensors.insert(name.clone(), m).is_some() {
            return Err(Error::CheckpointFormat(format!("duplicate tensor {name}")));
        }
    }
    let end = r.pos;

    let config = header.model;
    config.validate()?;
    let take = |tensors: &mut HashMap<String, Matrix>, prefix: &str| -> Result<ModelParams> {
        let mut p = ModelParams::zero_shaped(&config)?;
        for (name, slot) in p.tensors_mut() {
            let key = format!("{prefix}{name}");
            let m = tensors
                .remove(&key)
                .ok_or_else(|| Error::CheckpointFormat(format!("missing tensor {key}")))?;
            if m.shape() != slot.shape() {
                return Err(Error::CheckpointFormat(format!(
                    "{key}: stored {}x{}, configuration implies {}x{}",
                    m.rows(),
                    m.cols(),
                    slot.rows(),
                    slot.cols()
                )));
            }
            *slot = m;
        }
        Ok(p)
    };
    let params = take(&mut tensors, "")?;
    let moments = if tensors.is_empty() {
        None
    } else {
        Some((take(&mut tensors, "opt.m.")?, take(&mut tensors, "opt.v.")?))
    };
    if let Some(extra) = tensors.keys().min() {
        return Err(Error::CheckpointFormat(format!("unexpected tensor {extra}")));
    }
    let ckpt = Checkpoint {
        config,
        tokenizers: header.tokenizers,
        params,
        optimizer: OptimizerState {
            config: header.optimizer,
            step: header.optimizer_step,
            moments,
        },
        epoch: header.epoch,
        step: header.step,
    };
    Ok((ckpt, end))
}
