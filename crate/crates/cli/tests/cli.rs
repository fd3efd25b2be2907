use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use colink::Checkpoint;

const TINY: &str = r#"
version = 1

[encoder]
hidden_dim = 16
num_layers = 1
num_heads = 2
ffn_dim = 32
max_seq_len = 64

[context]
context_window = 64

[train]
epochs = 2
"#;

fn colink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colink"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = colink(args);
    assert!(
        out.status.success(),
        "colink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Data {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Generated corpus plus a tiny-model config whose paths point at it.
    fn new(seed: u64) -> Data {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("data");
        let seed = seed.to_string();
        ok(&[
            "generate", "--out", s(&out), "--entities", "20", "--docs", "15",
            "--mentions-per-doc", "4", "--seed", &seed,
        ]);
        let generated = fs::read_to_string(out.join("colink.toml")).unwrap();
        let paths = &generated[generated.find("[paths]").unwrap()..];
        let config = dir.path().join("tiny.toml");
        fs::write(&config, format!("{TINY}\n{paths}")).unwrap();
        Data { dir, config }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.dir.path().join("data").join(name)
    }
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn generate_is_deterministic_and_loadable() {
    let a = Data::new(7);
    let b = Data::new(7);
    for f in ["kb.tsv", "vocab.txt", "train.jsonl", "dev.jsonl", "test.jsonl"] {
        assert_eq!(read(&a.data(f)), read(&b.data(f)), "{f}");
    }
    let vocab = colink::Vocabulary::load(a.data("vocab.txt")).unwrap();
    let kb = colink::KnowledgeBase::load(a.data("kb.tsv")).unwrap();
    let docs = colink::corpus::load_corpus(a.data("train.jsonl"), &vocab, &kb).unwrap();
    assert_eq!(docs.len(), 9);
    let c = Data::new(8);
    assert_ne!(read(&a.data("train.jsonl")), read(&c.data("train.jsonl")));
}

#[test]
fn invalid_generation_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = colink(&["generate", "--out", s(dir.path()), "--ambiguity", "3", "--entities", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ambiguity"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let d = Data::new(1);
    let bad = d.path("bad.toml");
    fs::write(&bad, "version = 1\n[train]\nepochz = 3\n").unwrap();
    let out = colink(&["--config", s(&bad), "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

fn train_meta(ckpt: &Path) -> serde_json::Value {
    Checkpoint::load(ckpt).unwrap().meta
}

#[test]
fn config_precedence_is_flag_then_file_then_default() {
    let d = Data::new(2);
    let ck = d.path("p.ckpt");
    let base = ["train", "--epochs", "1", "--checkpoint", s(&ck)];

    // default
    let mut args = vec!["--config", s(&d.config)];
    args.extend(base);
    ok(&args);
    let m = train_meta(&ck);
    assert_eq!(m["train"]["n_hard"], 10);
    assert_eq!(m["train"]["batch_size"], 8);
    assert_eq!(m["mode"], "collective");

    // file
    let file = d.path("file.toml");
    let text = fs::read_to_string(&d.config).unwrap().replace(
        "[train]\n",
        "[train]\nn_hard = 3\nbatch_size = 4\n",
    );
    fs::write(&file, text.replace("version = 1\n", "version = 1\nmode = \"per_mention\"\n")).unwrap();
    let mut args = vec!["--config", s(&file)];
    args.extend(base);
    ok(&args);
    let m = train_meta(&ck);
    assert_eq!(m["train"]["n_hard"], 3);
    assert_eq!(m["train"]["batch_size"], 4);
    assert_eq!(m["train"]["epochs"], 1);
    assert_eq!(m["mode"], "per_mention");

    // flag
    args.extend(["--n-hard", "5", "--mode", "collective", "--seed", "11"]);
    ok(&args);
    let m = train_meta(&ck);
    assert_eq!(m["train"]["n_hard"], 5);
    assert_eq!(m["train"]["batch_size"], 4);
    assert_eq!(m["train"]["seed"], 11);
    assert_eq!(m["mode"], "collective");
}

fn losses(log: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(log)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_seconds");
            v
        })
        .collect()
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let d = Data::new(3);
    let cfg = s(&d.config);
    let (full, part) = (d.path("full.ckpt"), d.path("part.ckpt"));
    let (full_log, part_log) = (d.path("full.jsonl"), d.path("part.jsonl"));
    ok(&["--config", cfg, "--deterministic", "train", "--epochs", "3", "--checkpoint", s(&full), "--log", s(&full_log)]);
    ok(&[
        "--config", cfg, "--deterministic", "train", "--epochs", "3", "--checkpoint", s(&part),
        "--log", s(&part_log), "--stop-after", "1",
    ]);
    assert_eq!(train_meta(&part)["epoch"], 1);
    ok(&[
        "--config", cfg, "--deterministic", "train", "--epochs", "3", "--checkpoint", s(&part),
        "--log", s(&part_log), "--resume",
    ]);
    assert_eq!(read(&full), read(&part));
    assert_eq!(losses(&full_log), losses(&part_log));
    assert_eq!(losses(&full_log).len(), 6);
}

fn predictions(p: &Path) -> Vec<colink::Prediction> {
    colink::index::read_predictions(p).unwrap()
}

#[test]
fn pipeline_is_bit_reproducible() {
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let d = Data::new(4);
        let cfg = s(&d.config);
        ok(&["--config", cfg, "--deterministic", "train"]);
        let pred = d.path("pred.jsonl");
        let report = d.path("report.json");
        ok(&["--config", cfg, "--deterministic", "link", "--out", s(&pred)]);
        ok(&["eval", "--pred", s(&pred), "--gold", s(&d.data("test.jsonl")), "--out", s(&report)]);
        outputs.push((read(&d.data("model.ckpt")), read(&pred), read(&report)));
        let p = predictions(&pred);
        let gold: usize = fs::read_to_string(d.data("test.jsonl"))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["mentions"].as_array().unwrap().len())
            .sum();
        assert_eq!(p.len(), gold, "one prediction per gold span");
    }
    assert!(outputs[0] == outputs[1]);
}

#[test]
fn higher_gamma_keeps_a_subset_of_spans() {
    let d = Data::new(5);
    let cfg = s(&d.config);
    ok(&["--config", cfg, "train", "--mode", "end-to-end-exhaustive", "--epochs", "1"]);
    let mut sets = Vec::new();
    for g in ["0.05", "0.5", "0.99"] {
        let out = d.path(&format!("g{g}.jsonl"));
        ok(&["--config", cfg, "link", "--gamma", g, "--out", s(&out)]);
        let spans: std::collections::HashSet<(String, usize, usize)> =
            predictions(&out).into_iter().map(|p| (p.doc_id, p.start, p.end)).collect();
        sets.push(spans);
    }
    assert!(sets[1].is_subset(&sets[0]));
    assert!(sets[2].is_subset(&sets[1]));
    let out = d.path("tuned.jsonl");
    ok(&["--config", cfg, "link", "--tune-gamma", s(&d.data("dev.jsonl")), "--out", s(&out)]);
}

#[test]
fn empty_document_yields_no_predictions() {
    let d = Data::new(6);
    let cfg = s(&d.config);
    ok(&["--config", cfg, "train", "--epochs", "1"]);
    let empty = d.path("empty.jsonl");
    fs::write(&empty, "{\"doc_id\":\"e\",\"tokens\":[],\"mentions\":[]}\n").unwrap();
    for mode in ["collective", "per-mention", "end-to-end-exhaustive", "end-to-end-bio"] {
        let out = d.path("empty_pred.jsonl");
        ok(&["--config", cfg, "link", "--mode", mode, "--corpus", s(&empty), "--out", s(&out)]);
        assert!(predictions(&out).is_empty(), "{mode}");
    }
}

#[test]
fn vocabulary_mismatch_is_refused() {
    let d = Data::new(7);
    let cfg = s(&d.config);
    ok(&["--config", cfg, "train", "--epochs", "1"]);
    let other = d.path("other_vocab.txt");
    fs::write(&other, fs::read_to_string(d.data("vocab.txt")).unwrap() + "zzz\n").unwrap();
    let out = colink(&["--config", cfg, "link", "--vocab", s(&other), "--out", s(&d.path("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

fn gold_as_predictions(gold: &Path, out: &Path) {
    let mut text = String::new();
    for line in fs::read_to_string(gold).unwrap().lines() {
        let doc: serde_json::Value = serde_json::from_str(line).unwrap();
        for m in doc["mentions"].as_array().unwrap() {
            let p = serde_json::json!({
                "doc_id": doc["doc_id"], "start": m["start"], "end": m["end"],
                "entity_id": m["entity_id"], "score": 1.0, "p": null, "ranked": [m["entity_id"]],
            });
            text.push_str(&p.to_string());
            text.push('\n');
        }
    }
    fs::write(out, text).unwrap();
}

#[test]
fn eval_checks() {
    let d = Data::new(8);
    let gold = d.data("test.jsonl");
    let pred = d.path("gold_pred.jsonl");
    gold_as_predictions(&gold, &pred);
    let out = ok(&["eval", "--pred", s(&pred), "--gold", s(&gold)]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for k in ["p_at_1", "map"] {
        assert_eq!(r[k], 1.0);
    }
    assert_eq!(r["strict"]["f1"], 1.0);
    assert_eq!(r["partial"]["f1"], 1.0);

    // normalized requires candidates
    let out = colink(&["eval", "--pred", s(&pred), "--gold", s(&gold), "--normalized"]);
    assert_eq!(out.status.code(), Some(2));

    // predictions for documents missing from the gold file
    let other = d.data("dev.jsonl");
    let out = colink(&["eval", "--pred", s(&pred), "--gold", s(&other)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("doc"), "{err}");
}

#[test]
fn bench_reports_both_modes() {
    let d = Data::new(9);
    let out = ok(&["--config", s(&d.config), "bench", "--init", "--runs", "3"]);
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(r["collective"]["threads"], 1);
}
