use std::fmt::Write as _;
use std::path::Path;

use crate::data::SpellPair;
use crate::decoding::{correct, DecodeOptions, ModelBundle};
use crate::error::{Error, Result};
use crate::tokenizer::normalize;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub input: String,
    pub reference: String,
    pub prediction: String,
    pub matched: bool,
    /// Decode failure for this example, if any; counted as a miss.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn n_total(&self) -> usize {
        self.records.len()
    }

    pub fn n_exact(&self) -> usize {
        self.records.iter().filter(|r| r.matched).count()
    }

    pub fn accuracy(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.n_exact() as f64 / self.n_total() as f64
        }
    }

    /// Builds a report from predictions aligned with `pairs`.
    pub fn from_predictions(pairs: &[SpellPair], predictions: Vec<Result<String>>) -> Self {
        let records = pairs
            .iter()
            .zip(predictions)
            .map(|(p, pred)| {
                let (prediction, error) = match pred {
                    Ok(s) => (normalize(&s), None),
                    Err(e) => (String::new(), Some(e.to_string())),
                };
                EvalRecord {
                    matched: error.is_none() && prediction == normalize(&p.clean),
                    input: p.noisy.clone(),
                    reference: p.clean.clone(),
                    prediction,
                    error,
                }
            })
            .collect();
        EvalReport { records }
    }

    /// TSV with a header, one row per example, `# error` lines for failed
    /// examples, and a closing `# accuracy=` line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("input\treference\tprediction\tmatch\n");
        for r in &self.records {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.input, r.reference, r.prediction, u8::from(r.matched));
        }
        for (k, r) in self.records.iter().enumerate() {
            if let Some(e) = &r.error {
                let _ = writeln!(s, "# error row {}: {}", k + 1, e.replace(['\n', '\t'], " "));
            }
        }
        let _ = writeln!(s, "# accuracy={:.4}", self.accuracy());
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Corrects every noisy query and scores exact matches against the clean one.
pub fn evaluate(bundle: &ModelBundle, pairs: &[SpellPair], opts: &DecodeOptions) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to evaluate".into()));
    }
    opts.validate()?;
    let predictions = pairs.iter().map(|p| correct(&p.noisy, bundle, opts)).collect();
    Ok(EvalReport::from_predictions(pairs, predictions))
}
