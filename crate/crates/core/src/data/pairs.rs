use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::normalize;

/// A misspelled query and its correction, both normalized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpellPair {
    pub noisy: String,
    pub clean: String,
}

impl SpellPair {
    /// Normalizes both sides; both must be nonempty afterwards.
    pub fn new(noisy: &str, clean: &str) -> Result<Self> {
        let (noisy, clean) = (normalize(noisy), normalize(clean));
        if clean.is_empty() || noisy.is_empty() {
            return Err(Error::Input("both sides of a pair must be nonempty".into()));
        }
        Ok(SpellPair { noisy, clean })
    }

    pub fn is_identity(&self) -> bool {
        self.noisy == self.clean
    }
}

/// Parses `noisy<TAB>clean` lines; blank lines are skipped.
pub fn parse_pairs(text: &str, source: &str) -> Result<Vec<SpellPair>> {
    let mut out = Vec::new();
    for (k, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(line, source, k + 1)?);
    }
    Ok(out)
}

fn parse_line(line: &str, source: &str, line_no: usize) -> Result<SpellPair> {
    let parse_err = |message: String| Error::Parse {
        path: source.to_string(),
        line: line_no,
        message,
    };
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 2 {
        return Err(parse_err(format!("expected 2 tab-separated columns, found {}", cols.len())));
    }
    SpellPair::new(cols[0], cols[1]).map_err(|_| parse_err("empty column".into()))
}

pub fn load_pairs(path: &Path) -> Result<Vec<SpellPair>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut out = Vec::new();
    for (k, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(raw).map_err(|_| Error::Encoding {
            path: source.clone(),
            line: k + 1,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if !line.trim().is_empty() {
            out.push(parse_line(line, &source, k + 1)?);
        }
    }
    Ok(out)
}

pub fn pairs_to_tsv(pairs: &[SpellPair]) -> String {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&p.noisy);
        s.push('\t');
        s.push_str(&p.clean);
        s.push('\n');
    }
    s
}

pub fn save_pairs(path: &Path, pairs: &[SpellPair]) -> Result<()> {
    std::fs::write(path, pairs_to_tsv(pairs)).map_err(|e| Error::io(path, e))
}
