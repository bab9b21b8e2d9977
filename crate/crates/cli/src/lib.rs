//! `seqspell` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use seqspell::data::{evaluate, load_pairs, make_synthetic_dataset, save_pairs, split, SpellPair};
use seqspell::decoding::{correct_topk, DecodeOptions, LengthNorm, ModelBundle};
use seqspell::model::{check_gradients_with, GradCheckOptions, ModelConfig, ModelParams};
use seqspell::numerics::Rng;
use seqspell::tokenizer::{normalize, TokenId, Tokenizer, TokenizerMode};
use seqspell::training::{train, Dataset, TokenizerRef, TokenizerRefs};

use crate::config::{RunConfig, TokenizerSide};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Error carrying the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<seqspell::Error> for Failure {
    fn from(e: seqspell::Error) -> Self {
        use seqspell::Error as E;
        let code = match &e {
            E::Config(_) => EXIT_USAGE,
            E::Numeric(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "seqspell", version, about = "Neural spelling correction for search queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn BPE merges (or a character vocabulary) from a text corpus.
    BpeLearn {
        /// Text file, one line per query.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 8000)]
        merges: usize,
        /// Output prefix; writes <prefix>.merges and <prefix>.vocab.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "bpe")]
        mode: ModeArg,
    },
    /// Generate synthetic pairs from a lexicon and write train/dev/test files.
    MakeData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model as described by a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides paths.work_dir.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Correct queries given as arguments, or one per line on standard input.
    Correct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Emit the k best corrections as TSV columns (text, score) per rank.
        #[arg(long)]
        topk: Option<usize>,
        text: Vec<String>,
    },
    /// Score exact-match accuracy on a pairs file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        /// Report destination; defaults to <pairs>.eval.tsv.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck {
        /// Run configuration with an optional [gradcheck] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ModeArg {
    Bpe,
    Character,
}

impl From<ModeArg> for TokenizerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bpe => TokenizerMode::Bpe,
            ModeArg::Character => TokenizerMode::Character,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Rank hypotheses by log-probability per generated token.
    #[arg(long)]
    length_norm: bool,
}

impl DecodeArgs {
    fn options(&self) -> Result<DecodeOptions, Failure> {
        let d = DecodeOptions::default();
        let opts = DecodeOptions {
            beam_width: self.beam_width.unwrap_or(d.beam_width),
            max_len: self.max_len.unwrap_or(d.max_len),
            length_norm: if self.length_norm {
                LengthNorm::DivideByLength
            } else {
                LengthNorm::None
            },
        };
        opts.validate()?;
        Ok(opts)
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{rendered}")
            } else {
                write!(stdout, "{rendered}")
            };
            return code;
        }
    };
    match dispatch(cli.command, stdin, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::BpeLearn {
            corpus,
            merges,
            out: prefix,
            mode,
        } => cmd_bpe_learn(&corpus, merges, &prefix, mode.into(), out),
        Command::MakeData { config, seed } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            cmd_make_data(&c, out)
        }
        Command::Train { config, seed, work_dir } => {
            let mut c = load_config(&config)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(w) = work_dir {
                c.paths.work_dir = std::env::current_dir().map(|d| d.join(&w)).unwrap_or(w);
            }
            cmd_train(&c, out, err)
        }
        Command::Correct {
            checkpoint,
            decode,
            topk,
            text,
        } => cmd_correct(&checkpoint, &decode.options()?, topk, &text, stdin, out),
        Command::Evaluate {
            checkpoint,
            pairs,
            report,
            decode,
        } => {
            let report = report.unwrap_or_else(|| {
                let mut p = pairs.clone().into_os_string();
                p.push(".eval.tsv");
                p.into()
            });
            cmd_evaluate(&checkpoint, &pairs, &report, &decode.options()?, out)
        }
        Command::Gradcheck { config, seed } => {
            let mut c = match config {
                Some(p) => load_config(&p)?,
                None => RunConfig::parse("", Path::new(".")).map_err(|e| Failure::usage(e.to_string()))?,
            };
            if let Some(s) = seed {
                c.seed = s;
            }
            cmd_gradcheck(&c, out)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| Failure::usage(format!("{e:#}")))
}

fn check(problems: Vec<String>) -> CmdResult {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "invalid configuration:\n  {}",
            problems.join("\n  ")
        )))
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    }
}

fn write_out(out: &mut dyn Write, s: &str) -> CmdResult {
    out.write_all(s.as_bytes()).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("writing output: {e}"),
    })
}

/// Nonblank lines of a UTF-8 text file.
fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    Ok(text
        .lines()
        .map(normalize)
        .filter(|l| !l.is_empty())
        .collect())
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    s.into()
}

pub fn cmd_bpe_learn(corpus: &Path, merges: usize, prefix: &Path, mode: TokenizerMode, out: &mut dyn Write) -> CmdResult {
    let lines = read_lines(corpus)?;
    if lines.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: format!("{}: corpus has no lines", corpus.display()),
        });
    }
    let tok = Tokenizer::train(&lines, mode, merges)?;
    let merges_path = (mode == TokenizerMode::Bpe).then(|| with_ext(prefix, ".merges"));
    tok.save(merges_path.as_deref(), &with_ext(prefix, ".vocab"))?;
    write_out(
        out,
        &format!("merges={} vocab_size={}\n", tok.merges().len(), tok.vocab_size()),
    )
}

pub fn cmd_make_data(c: &RunConfig, out: &mut dyn Write) -> CmdResult {
    check(c.validate_for_make_data())?;
    let lexicon_path = c.resolve(c.paths.lexicon.as_ref().unwrap());
    let lexicon = read_lines(&lexicon_path)?;
    let mut rng = Rng::new(c.noise.seed ^ c.seed);
    let pairs = make_synthetic_dataset(&lexicon, &c.noise, c.data.n_pairs, c.data.identity_fraction, &mut rng)?;
    let (tr, dv, te) = split(&pairs, c.data.split, c.data.split_mode, &mut rng)?;
    for (p, part) in [(&c.paths.train, &tr), (&c.paths.dev, &dv), (&c.paths.test, &te)] {
        let path = c.resolve(p.as_ref().unwrap());
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| io_fail(dir, e))?;
        }
        save_pairs(&path, part)?;
    }
    write_out(
        out,
        &format!("pairs={} train={} dev={} test={}\n", pairs.len(), tr.len(), dv.len(), te.len()),
    )
}

fn build_tokenizer(
    c: &RunConfig,
    side: &TokenizerSide,
    name: &str,
    corpus: &[String],
    work: &Path,
) -> Result<(Tokenizer, TokenizerRef), Failure> {
    let vocab_name = PathBuf::from(format!("{name}.vocab"));
    let merges_name = (side.mode == TokenizerMode::Bpe).then(|| PathBuf::from(format!("{name}.merges")));
    let tok = match &side.vocab_file {
        Some(v) => Tokenizer::load(side.mode, side.merges_file.as_ref().map(|m| c.resolve(m)).as_deref(), &c.resolve(v))?,
        None => Tokenizer::train(corpus, side.mode, side.merges)?,
    };
    // a copy always lives next to the checkpoint so the run directory is self-contained
    tok.save(merges_name.as_ref().map(|m| work.join(m)).as_deref(), &work.join(&vocab_name))?;
    Ok((
        tok,
        TokenizerRef {
            mode: side.mode,
            merges: merges_name,
            vocab: vocab_name,
        },
    ))
}

pub fn cmd_train(c: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    check(c.validate_for_train())?;
    let train_pairs = load_pairs(&c.resolve(c.paths.train.as_ref().unwrap()))?;
    if train_pairs.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: "training file has no pairs".into(),
        });
    }
    let dev_pairs = match &c.paths.dev {
        Some(p) => load_pairs(&c.resolve(p))?,
        None => Vec::new(),
    };
    let work = c.work_dir();
    std::fs::create_dir_all(&work).map_err(|e| io_fail(&work, e))?;

    let mut src_corpus: Vec<String> = train_pairs.iter().map(|p| p.noisy.clone()).collect();
    src_corpus.extend(train_pairs.iter().map(|p| p.clean.clone()));
    let tgt_corpus: Vec<String> = train_pairs.iter().map(|p| p.clean.clone()).collect();
    let (src_tok, src_ref) = build_tokenizer(c, &c.tokenizer.src, "src", &src_corpus, &work)?;
    let (tgt_tok, tgt_ref) = build_tokenizer(c, &c.tokenizer.tgt, "tgt", &tgt_corpus, &work)?;

    let encode = |pairs: &[SpellPair]| -> Vec<_> {
        pairs
            .iter()
            .map(|p| (src_tok.encode(&p.noisy), tgt_tok.encode(&p.clean)))
            .filter(|(s, t)| !s.is_empty() && !t.is_empty())
            .collect()
    };
    let dataset = Dataset {
        train: encode(&train_pairs),
        dev: encode(&dev_pairs),
    };
    let model = c.model.model_config(src_tok.vocab_size(), tgt_tok.vocab_size(), c.seed);
    let mut hp = c.train.clone();
    hp.seed ^= c.seed;

    let mut metrics = String::from("epoch\ttrain_loss\tdev_accuracy\n");
    let outcome = train(&dataset, &model, &hp, &mut |m| {
        let dev = m.dev_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(metrics, "{}\t{:.6}\t{}", m.epoch, m.train_loss, dev);
        let _ = writeln!(err, "epoch {} train_loss {:.6} dev_accuracy {}", m.epoch, m.train_loss, dev);
        ControlFlow::Continue(())
    })?;
    let mut ckpt = outcome.checkpoint;
    ckpt.tokenizers = Some(TokenizerRefs {
        src: src_ref,
        tgt: tgt_ref,
    });
    ckpt.save(&c.checkpoint_path())?;
    let metrics_path = c.metrics_path();
    std::fs::write(&metrics_path, metrics).map_err(|e| io_fail(&metrics_path, e))?;
    let last = outcome.history.last();
    write_out(
        out,
        &format!(
            "checkpoint={} epochs={} train_loss={:.6}\n",
            c.checkpoint_path().display(),
            outcome.history.len(),
            last.map_or(f64::NAN, |m| m.train_loss)
        ),
    )
}

pub fn cmd_correct(
    checkpoint: &Path,
    opts: &DecodeOptions,
    topk: Option<usize>,
    text: &[String],
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CmdResult {
    let bundle = ModelBundle::load(checkpoint)?;
    let k = topk.unwrap_or(1);
    if k == 0 {
        return Err(Failure::usage("--topk must be >= 1"));
    }
    let handle = |line: &str, out: &mut dyn Write| -> CmdResult {
        let ranked = correct_topk(line, &bundle, opts, k)?;
        let row = if topk.is_some() {
            ranked
                .iter()
                .map(|(s, score)| format!("{s}\t{score:.6}"))
                .collect::<Vec<_>>()
                .join("\t")
        } else {
            ranked.into_iter().next().map(|(s, _)| s).unwrap_or_default()
        };
        write_out(out, &format!("{row}\n"))
    };
    if text.is_empty() {
        for line in stdin.lines() {
            let line = line.map_err(|e| Failure {
                code: EXIT_DATA,
                message: format!("reading standard input: {e}"),
            })?;
            handle(&line, out)?;
        }
    } else {
        for t in text {
            handle(t, out)?;
        }
    }
    Ok(())
}

pub fn cmd_evaluate(checkpoint: &Path, pairs: &Path, report: &Path, opts: &DecodeOptions, out: &mut dyn Write) -> CmdResult {
    let bundle = ModelBundle::load(checkpoint)?;
    let pairs = load_pairs(pairs)?;
    let rep = evaluate(&bundle, &pairs, opts)?;
    rep.save(report)?;
    write_out(out, &format!("accuracy={:.4}\n", rep.accuracy()))
}

pub fn cmd_gradcheck(c: &RunConfig, out: &mut dyn Write) -> CmdResult {
    check(c.validate_for_gradcheck())?;
    let g = &c.gradcheck;
    let config = ModelConfig {
        encoder_layers: g.encoder_layers,
        decoder_layers: g.decoder_layers,
        cell: g.cell,
        seed: c.seed,
        ..ModelConfig::new(g.vocab_size, g.vocab_size, g.embed_dim, g.hidden_dim)
    };
    let params = ModelParams::init(&config)?;
    let mut rng = Rng::new(c.seed.wrapping_add(1));
    let real = g.vocab_size - seqspell::tokenizer::NUM_SPECIALS;
    let mut draw = |n: usize| -> Vec<TokenId> {
        (0..n)
            .map(|_| (seqspell::tokenizer::NUM_SPECIALS + rng.below(real)) as TokenId)
            .collect()
    };
    let (src, tgt) = (draw(g.src_len), draw(g.tgt_len));
    let options = GradCheckOptions {
        eps: g.eps,
        inject_fault: g.inject_fault.clone(),
    };
    let report = check_gradients_with(&params, &config, &src, &tgt, &options)?;
    let mut table = String::from("parameter\tentries\tmax_rel_error\tstatus\n");
    let mut failed = Vec::new();
    for r in &report {
        let ok = r.max_relative_error <= g.tolerance;
        let _ = writeln!(
            table,
            "{}\t{}\t{:.3e}\t{}",
            r.name,
            r.entries,
            r.max_relative_error,
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(r.name.clone());
        }
    }
    write_out(out, &table)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERIC,
            message: format!(
                "{} parameter group(s) exceed tolerance {:e}: {}",
                failed.len(),
                g.tolerance,
                failed.join(", ")
            ),
        })
    }
}

