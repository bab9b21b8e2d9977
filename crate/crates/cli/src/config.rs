//! Run configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use seqspell::data::{NoiseSpec, SplitMode, DEFAULT_IDENTITY_FRACTION};
use seqspell::decoding::DecodeOptions;
use seqspell::model::{CellVariant, ModelConfig};
use seqspell::tokenizer::TokenizerMode;
use seqspell::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; each component derives its own from it unless set there.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub decode: DecodeOptions,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Tokenizer files, checkpoint and metrics are written here.
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            lexicon: None,
            train: None,
            dev: None,
            test: None,
            work_dir: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_pairs: usize,
    pub identity_fraction: f64,
    pub split: [f64; 3],
    pub split_mode: SplitMode,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n_pairs: 10_000,
            identity_fraction: DEFAULT_IDENTITY_FRACTION,
            split: [0.8, 0.1, 0.1],
            split_mode: SplitMode::CleanDisjoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSide {
    pub mode: TokenizerMode,
    pub merges: usize,
    /// Existing tokenizer files; when absent the tokenizer is learned from
    /// the training pairs.
    pub vocab_file: Option<PathBuf>,
    pub merges_file: Option<PathBuf>,
}

impl Default for TokenizerSide {
    fn default() -> Self {
        TokenizerSide {
            mode: TokenizerMode::Bpe,
            merges: 8000,
            vocab_file: None,
            merges_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerSection {
    pub src: TokenizerSide,
    pub tgt: TokenizerSide,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Defaults to `hidden_dim`.
    pub attention_dim: Option<usize>,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub cell: CellVariant,
    pub seed: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            embed_dim: 32,
            hidden_dim: 64,
            attention_dim: None,
            encoder_layers: 2,
            decoder_layers: 1,
            cell: CellVariant::PaperCifg,
            seed: None,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            attention_dim: self.attention_dim.unwrap_or(self.hidden_dim),
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            cell: self.cell,
            seed: self.seed.unwrap_or(seed),
            ..ModelConfig::new(src_vocab, tgt_vocab, self.embed_dim, self.hidden_dim)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub cell: CellVariant,
    pub src_len: usize,
    pub tgt_len: usize,
    pub eps: f64,
    pub tolerance: f64,
    /// Name of a parameter whose analytic gradient is deliberately broken.
    pub inject_fault: Option<String>,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            vocab_size: 20,
            embed_dim: 8,
            hidden_dim: 8,
            encoder_layers: 2,
            decoder_layers: 1,
            cell: CellVariant::PaperCifg,
            src_len: 5,
            tgt_len: 4,
            eps: 1e-5,
            tolerance: 1e-4,
            inject_fault: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut config: RunConfig = toml::from_str(text)?;
        config.base_dir = base_dir.to_path_buf();
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        RunConfig::parse(&text, base).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.paths.work_dir)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.work_dir().join("model.ckpt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.work_dir().join("metrics.tsv")
    }

    fn required(&self, name: &str, p: &Option<PathBuf>, problems: &mut Vec<String>) {
        if p.is_none() {
            problems.push(format!("paths.{name} is required"));
        }
    }

    fn common_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let push = |r: seqspell::Result<()>, problems: &mut Vec<String>| {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        };
        push(self.noise.validate(), &mut problems);
        push(self.train.validate(), &mut problems);
        push(self.decode.validate(), &mut problems);
        let m = &self.model;
        if m.embed_dim == 0 || m.hidden_dim == 0 || m.attention_dim == Some(0) {
            problems.push("model dimensions must be >= 1".into());
        }
        if m.encoder_layers == 0 || m.decoder_layers == 0 {
            problems.push("model needs at least one encoder and one decoder layer".into());
        }
        for (side, t) in [("src", &self.tokenizer.src), ("tgt", &self.tokenizer.tgt)] {
            if t.mode == TokenizerMode::Character && t.merges_file.is_some() {
                problems.push(format!("tokenizer.{side}: character mode takes no merges_file"));
            }
            if t.mode == TokenizerMode::Bpe && t.vocab_file.is_some() && t.merges_file.is_none() {
                problems.push(format!("tokenizer.{side}: bpe vocab_file needs a merges_file"));
            }
            if t.vocab_file.is_none() && t.merges_file.is_some() {
                problems.push(format!("tokenizer.{side}: merges_file given without vocab_file"));
            }
        }
        problems
    }

    /// Everything `train` needs, all problems reported together.
    pub fn validate_for_train(&self) -> Vec<String> {
        let mut problems = self.common_problems();
        self.required("train", &self.paths.train, &mut problems);
        problems
    }

    pub fn validate_for_make_data(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if let Err(e) = self.noise.validate() {
            problems.push(e.to_string());
        }
        self.required("lexicon", &self.paths.lexicon, &mut problems);
        self.required("train", &self.paths.train, &mut problems);
        self.required("dev", &self.paths.dev, &mut problems);
        self.required("test", &self.paths.test, &mut problems);
        let d = &self.data;
        if !(0.0..=1.0).contains(&d.identity_fraction) {
            problems.push(format!("data.identity_fraction must be in [0, 1], got {}", d.identity_fraction));
        }
        if d.split.iter().any(|&f| !(f > 0.0)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            problems.push(format!("data.split must be positive and sum to 1, got {:?}", d.split));
        }
        if d.n_pairs < 3 {
            problems.push("data.n_pairs must be >= 3".into());
        }
        problems
    }

    pub fn validate_for_gradcheck(&self) -> Vec<String> {
        let g = &self.gradcheck;
        let mut problems = Vec::new();
        if g.vocab_size <= seqspell::tokenizer::NUM_SPECIALS {
            problems.push("gradcheck.vocab_size must exceed the 4 reserved ids".into());
        }
        if g.embed_dim == 0 || g.hidden_dim == 0 || g.encoder_layers == 0 || g.decoder_layers == 0 {
            problems.push("gradcheck model dimensions and layer counts must be >= 1".into());
        }
        if g.src_len == 0 || g.tgt_len == 0 {
            problems.push("gradcheck.src_len and tgt_len must be >= 1".into());
        }
        if !(g.eps > 0.0) || !(g.tolerance > 0.0) {
            problems.push("gradcheck.eps and tolerance must be > 0".into());
        }
        problems
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_file() {
        let c = RunConfig::parse("", Path::new("/x")).unwrap();
        assert_eq!(c.decode, DecodeOptions::default());
        assert_eq!(c.checkpoint_path(), Path::new("/x/run/model.ckpt"));
        assert_eq!(c.validate_for_train(), vec!["paths.train is required".to_string()]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("sed = 1", Path::new(".")).is_err());
        assert!(RunConfig::parse("[model]\nhiden_dim = 3", Path::new(".")).is_err());
        assert!(RunConfig::parse("[train.optimizer]\nlr = 1", Path::new(".")).is_err());
    }

    #[test]
    fn full_file() {
        let text = r#"
            seed = 7
            [paths]
            train = "train.tsv"
            dev = "dev.tsv"
            work_dir = "out"
            [tokenizer.src]
            mode = "character"
            [tokenizer.tgt]
            mode = "bpe"
            merges = 100
            [model]
            hidden_dim = 16
            cell = "standard-lstm"
            [train]
            epochs = 3
            [train.optimizer]
            algorithm = "sgd"
            learning_rate = 0.5
            [decode]
            beam_width = 2
            length_norm = "divide-by-length"
            [noise]
            p_char = 0.2
            [noise.weights]
            substitution = 1.0
            deletion = 0.0
            insertion = 0.0
            transposition = 0.0
        "#;
        let c = RunConfig::parse(text, Path::new("base")).unwrap();
        assert!(c.validate_for_train().is_empty(), "{:?}", c.validate_for_train());
        assert_eq!(c.tokenizer.src.mode, TokenizerMode::Character);
        assert_eq!(c.model.model_config(10, 12, c.seed).seed, 7);
        assert_eq!(c.model.model_config(10, 12, c.seed).attention_dim, 16);
        assert_eq!(c.train.optimizer.learning_rate, 0.5);
        assert_eq!(c.train.batch_size, TrainConfig::default().batch_size);
    }

    #[test]
    fn problems_listed_exhaustively() {
        let text = r#"
            [model]
            hidden_dim = 0
            [train]
            batch_size = 0
            [decode]
            beam_width = 0
            [noise]
            p_char = 2.0
        "#;
        let c = RunConfig::parse(text, Path::new(".")).unwrap();
        let p = c.validate_for_train();
        assert_eq!(p.len(), 5, "{p:?}");
    }
}
