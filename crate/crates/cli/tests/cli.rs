use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqspell"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY_PAIRS: &str = "shose\tshoes\nshoes\tshoes\nlmap\tlamp\nlamp\tlamp\nred\tred\nrde\tred\n";

fn toy_config(dir: &Path, epochs: usize, lr: f64) -> PathBuf {
    std::fs::write(dir.join("train.tsv"), TOY_PAIRS).unwrap();
    let cfg = format!(
        r#"
seed = 3
[paths]
train = "train.tsv"
dev = "train.tsv"
work_dir = "run"
[tokenizer.src]
mode = "character"
[tokenizer.tgt]
mode = "character"
[model]
embed_dim = 16
hidden_dim = 32
encoder_layers = 1
decoder_layers = 1
[train]
epochs = {epochs}
batch_size = 6
[train.optimizer]
learning_rate = {lr}
[decode]
beam_width = 3
max_len = 12
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
}

#[test]
fn bpe_learn_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "red shoes\nblue shoes\nred dress\nrunning shoes\n").unwrap();

    let prefix = dir.path().join("zero");
    let o = run(&["bpe-learn", "--corpus", p(&corpus), "--merges", "0", "--out", p(&prefix)]);
    assert_eq!(o.status.code(), Some(0));
    let vocab = std::fs::read_to_string(dir.path().join("zero.vocab")).unwrap();
    let distinct: std::collections::BTreeSet<char> = "red shoes blue dress running".chars().filter(|c| *c != ' ').collect();
    let vocab_lines = vocab.lines().filter(|l| !l.starts_with('#')).count();
    // specials + characters + end-of-word marker
    assert_eq!(vocab_lines, 4 + distinct.len() + 1);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for prefix in [&a, &b] {
        let o = run(&["bpe-learn", "--corpus", p(&corpus), "--merges", "10", "--out", p(prefix)]);
        assert_eq!(o.status.code(), Some(0));
    }
    for ext in ["merges", "vocab"] {
        let x = std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let y = std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert_eq!(x, y);
    }
    let merges = std::fs::read_to_string(dir.path().join("a.merges")).unwrap();
    assert_eq!(merges.lines().filter(|l| !l.starts_with('#')).count(), 10);

    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "\n\n").unwrap();
    let o = run(&["bpe-learn", "--corpus", p(&empty), "--out", p(&prefix)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["bpe-learn", "--corpus", p(&dir.path().join("missing")), "--out", p(&prefix)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_config_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[paths]\ntrain = \"t.tsv\"\nwork_dir = \"out\"\n[model]\nhiden = 1\n").unwrap();
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(
        &cfg,
        "[paths]\ntrain = \"t.tsv\"\nwork_dir = \"out\"\n[train]\nbatch_size = 0\n[decode]\nbeam_width = 0\n",
    )
    .unwrap();
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let msg = String::from_utf8(o.stderr).unwrap();
    assert!(msg.contains("batch_size") && msg.contains("beam_width"), "{msg}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn make_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("lex.txt"), "red shoes\nblue jeans\nlamp\nphone case\nwool socks\n").unwrap();
    let cfg = dir.path().join("data.toml");
    std::fs::write(
        &cfg,
        "seed = 4\n[paths]\nlexicon = \"lex.txt\"\ntrain = \"d/train.tsv\"\ndev = \"d/dev.tsv\"\ntest = \"d/test.tsv\"\n[data]\nn_pairs = 50\nsplit_mode = \"random\"\n",
    )
    .unwrap();
    let o = run(&["make-data", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "pairs=50 train=40 dev=5 test=5\n");
    let first = std::fs::read(dir.path().join("d/train.tsv")).unwrap();
    run(&["make-data", "--config", p(&cfg)]);
    assert_eq!(first, std::fs::read(dir.path().join("d/train.tsv")).unwrap());
    run(&["make-data", "--config", p(&cfg), "--seed", "5"]);
    assert_ne!(first, std::fs::read(dir.path().join("d/train.tsv")).unwrap());
}

#[test]
fn zero_learning_rate_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), 2, 0.0);
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = seqspell::training::load_checkpoint(&dir.path().join("run/model.ckpt")).unwrap();
    assert_eq!(ckpt.params, seqspell::model::ModelParams::init(&ckpt.config).unwrap());
}

#[test]
fn train_correct_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), 150, 0.01);
    let o = run(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt_path = dir.path().join("run/model.ckpt");
    let ckpt = p(&ckpt_path);

    // same config twice: identical checkpoint and metrics
    let first_ckpt = std::fs::read(&ckpt_path).unwrap();
    let first_metrics = std::fs::read(dir.path().join("run/metrics.tsv")).unwrap();
    let o = run(&["train", "--config", p(&cfg), "--work-dir", p(&dir.path().join("again"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first_ckpt, std::fs::read(dir.path().join("again/model.ckpt")).unwrap());
    assert_eq!(first_metrics, std::fs::read(dir.path().join("again/metrics.tsv")).unwrap());
    let metrics = String::from_utf8(first_metrics).unwrap();
    assert!(metrics.starts_with("epoch\ttrain_loss\tdev_accuracy\n"));
    assert!(metrics.lines().last().unwrap().ends_with("\t1.0000"), "{metrics}");

    let o = run(&["correct", "--checkpoint", ckpt, "shose"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "shoes\n");

    let o = run_stdin(&["correct", "--checkpoint", ckpt], "");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "");

    let o = run_stdin(&["correct", "--checkpoint", ckpt], "lmap\nrde\n");
    assert_eq!(stdout(&o), "lamp\nred\n");

    let o = run(&["correct", "--checkpoint", ckpt, "--topk", "3", "--beam-width", "4", "shose"]);
    let out = stdout(&o);
    let cols: Vec<&str> = out.trim_end().split('\t').collect();
    assert_eq!(cols.len(), 6);
    let scores: Vec<f64> = cols.iter().skip(1).step_by(2).map(|s| s.parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(cols[0], "shoes");

    let pairs = dir.path().join("train.tsv");
    let report = dir.path().join("eval.tsv");
    let o = run(&["evaluate", "--checkpoint", ckpt, "--pairs", p(&pairs), "--report", p(&report)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "accuracy=1.0000\n");
    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), TOY_PAIRS.lines().count());
    let hits = rows.iter().filter(|r| r.split('\t').nth(3) == Some("1")).count();
    assert_eq!(text.lines().last().unwrap(), format!("# accuracy={:.4}", hits as f64 / rows.len() as f64));

    // a target vocabulary that disagrees with the checkpoint is a configuration error
    let tgt_vocab = dir.path().join("run/tgt.vocab");
    let text = std::fs::read_to_string(&tgt_vocab).unwrap();
    let shorter: Vec<&str> = text.lines().collect();
    std::fs::write(&tgt_vocab, shorter[..shorter.len() - 1].join("\n") + "\n").unwrap();
    let o = run(&["correct", "--checkpoint", ckpt, "shose"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    let o = run(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    let names: Vec<&str> = out.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len());
    assert!(names.contains(&"encoder.0.bwd.W_f") && names.contains(&"output.b_d"));
    assert!(out.lines().skip(1).all(|l| l.ends_with("PASS")));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    std::fs::write(&cfg, "[gradcheck]\ninject_fault = \"attention.v_a\"\n").unwrap();
    let o = run(&["gradcheck", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stderr).unwrap().contains("attention.v_a"));
}
