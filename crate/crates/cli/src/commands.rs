use std::collections::{HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use colink::corpus::{
    generate_synthetic_corpus, load_corpus, read_records, save_corpus, split_documents, Document,
    SyntheticSpec,
};
use colink::encoder::init_params;
use colink::eval::{
    bench_throughput, default_gamma_grid, evaluate_predictions, mention_key, sweep_gamma,
    throughput_ratio, ThroughputReport,
};
use colink::index::{build_index, entity_inputs, read_predictions, write_predictions, DecodeConfig};
use colink::linker::build_examples;
use colink::{
    Checkpoint, ContextConfig, Error, KnowledgeBase, LinkMode, Linker, Result, Trainer,
    Vocabulary,
};

use crate::config::{check_exists, require, RunConfig};
use crate::{BenchArgs, Cli, Command, EvalArgs, GenerateArgs, LinkArgs, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    let threads = if cli.deterministic { 1 } else { cli.threads };
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.apply_seed();
    let from_file = cli.config.is_some();
    match cli.command {
        Command::Generate(a) => generate(&cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Link(a) => link(cfg, from_file, a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(cfg, a),
    }
}

fn override_path(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn generate(cfg: &RunConfig, a: GenerateArgs) -> Result<()> {
    let mut spec = SyntheticSpec::default();
    set(&mut spec.entities, a.entities);
    set(&mut spec.docs, a.docs);
    set(&mut spec.mentions_per_doc, a.mentions_per_doc);
    set(&mut spec.ambiguity, a.ambiguity);
    set(&mut spec.heads, a.heads);
    set(&mut spec.modifiers, a.modifiers);
    set(&mut spec.max_modifiers, a.max_modifiers);
    set(&mut spec.vocab_size, a.vocab_size);
    set(&mut spec.distractor_rate, a.distractor_rate);
    if !(0.0..=1.0).contains(&(a.train_fraction + a.dev_fraction))
        || a.train_fraction < 0.0
        || a.dev_fraction < 0.0
    {
        return Err(Error::Config("split fractions must be non-negative and sum to at most 1".into()));
    }
    let seed = cfg.seed.unwrap_or(0);
    let corpus = generate_synthetic_corpus(&spec, seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let kb = a.out.join("kb.tsv");
    let vocab = a.out.join("vocab.txt");
    corpus.kb.save(&kb)?;
    corpus.vocab.save(&vocab)?;
    let (train, dev, test) = split_documents(corpus.docs, a.train_fraction, a.dev_fraction);
    let mut run = RunConfig {
        seed: Some(seed),
        ..RunConfig::default()
    };
    run.paths.kb = Some(kb);
    run.paths.vocab = Some(vocab);
    for (name, docs, slot) in [
        ("train.jsonl", &train, &mut run.paths.train),
        ("dev.jsonl", &dev, &mut run.paths.dev),
        ("test.jsonl", &test, &mut run.paths.test),
    ] {
        let p = a.out.join(name);
        save_corpus(&p, docs, &corpus.vocab)?;
        *slot = Some(p);
    }
    run.paths.checkpoint = Some(a.out.join("model.ckpt"));
    run.paths.log = Some(a.out.join("train_log.jsonl"));
    let cfg_path = a.out.join("colink.toml");
    fs::write(&cfg_path, run.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    fs::write(
        a.out.join("spec.json"),
        serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n",
    )
    .map_err(|e| Error::io(a.out.join("spec.json"), e))?;
    log::info!(
        "wrote {} entities and {}/{}/{} documents to {}",
        corpus.kb.len(),
        train.len(),
        dev.len(),
        test.len(),
        a.out.display()
    );
    Ok(())
}

fn load_kb_vocab(cfg: &RunConfig) -> Result<(KnowledgeBase, Vocabulary)> {
    let kb = require(&cfg.paths.kb, "kb", "kb")?;
    let vocab = require(&cfg.paths.vocab, "vocab", "vocab")?;
    check_exists(&[kb, vocab])?;
    Ok((KnowledgeBase::load(kb)?, Vocabulary::load(vocab)?))
}

/// Training settings stored in the checkpoint and reused by `link`.
#[derive(Serialize, Deserialize)]
struct InferenceMeta {
    mode: LinkMode,
    context: ContextConfig,
    decode: DecodeConfig,
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    override_path(&mut cfg.paths.kb, a.paths.kb);
    override_path(&mut cfg.paths.vocab, a.paths.vocab);
    override_path(&mut cfg.paths.checkpoint, a.paths.checkpoint);
    override_path(&mut cfg.paths.train, a.train);
    override_path(&mut cfg.paths.dev, a.dev);
    override_path(&mut cfg.paths.log, a.log);
    if let Some(m) = a.mode {
        cfg.mode = Some(m.into());
    }
    let t = &mut cfg.train;
    set(&mut t.epochs, a.epochs);
    set(&mut t.learning_rate, a.learning_rate);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.n_hard, a.n_hard);
    set(&mut t.n_random, a.n_random);
    set(&mut t.refresh_every, a.refresh_every);
    set(&mut t.detection_weight, a.detection_weight);
    if a.target_p_at_1.is_some() {
        t.target_p_at_1 = a.target_p_at_1;
    }
    let e = &mut cfg.encoder;
    set(&mut e.hidden_dim, a.hidden_dim);
    set(&mut e.num_layers, a.layers);
    set(&mut e.num_heads, a.heads);
    set(&mut e.tie_encoders, a.tie_encoders);
    if a.stop_after == Some(0) {
        return Err(Error::Config("--stop-after must be at least 1".into()));
    }
    cfg.validate()?;
    let mode = cfg.mode.unwrap_or(LinkMode::Collective);

    let (kb, vocab) = load_kb_vocab(&cfg)?;
    let train_path = require(&cfg.paths.train, "train", "train")?;
    let ckpt_path = require(&cfg.paths.checkpoint, "checkpoint", "checkpoint")?.to_path_buf();
    check_exists(&[train_path])?;
    if cfg.encoder.vocab_size == 0 {
        cfg.encoder.vocab_size = vocab.len();
    } else if cfg.encoder.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "encoder.vocab_size is {} but the vocabulary has {} tokens",
            cfg.encoder.vocab_size,
            vocab.len()
        )));
    }
    cfg.encoder.validate()?;
    cfg.context.validate(&cfg.encoder)?;

    let train_docs = load_corpus(train_path, &vocab, &kb)?;
    let dev_docs = match &cfg.paths.dev {
        Some(p) => load_corpus(p, &vocab, &kb)?,
        None => Vec::new(),
    };
    let inputs = entity_inputs(&kb, &vocab, &cfg.encoder);
    let examples = build_examples(&train_docs, &kb, mode, &cfg.context, &cfg.encoder)?;
    if examples.iter().all(|e| e.mentions.is_empty()) && !mode.is_end_to_end() {
        return Err(Error::NoMentions);
    }
    let dev = build_examples(&dev_docs, &kb, mode, &cfg.context, &cfg.encoder)?;

    let resuming = a.resume && ckpt_path.exists();
    let mut trainer = if resuming {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if ckpt.vocab_hash != vocab.fingerprint() {
            return Err(Error::VocabMismatch {
                expected: ckpt.vocab_hash,
                found: vocab.fingerprint(),
            });
        }
        if *ckpt.config() != cfg.encoder {
            return Err(Error::Config("encoder settings differ from the checkpoint being resumed".into()));
        }
        Trainer::resume(ckpt, &inputs, examples, cfg.train.clone(), mode, cfg.decode.max_span_len)?
    } else {
        let params = init_params(&cfg.encoder)?;
        Trainer::new(params, &inputs, examples, cfg.train.clone(), mode, cfg.decode.max_span_len)?
    };
    if trainer.is_done() {
        log::info!("checkpoint already at epoch {}; nothing to do", trainer.epoch);
        return Ok(());
    }

    let mut log_file = match &cfg.paths.log {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .write(true)
                .append(resuming)
                .truncate(!resuming)
                .open(p)
                .map_err(|e| Error::io(p, e))?,
        ),
        None => None,
    };
    let meta = serde_json::to_value(InferenceMeta {
        mode,
        context: cfg.context.clone(),
        decode: cfg.decode.clone(),
    })
    .expect("meta serializes");
    let vocab_hash = vocab.fingerprint();
    let log_path = cfg.paths.log.clone();
    let mut ran = 0usize;
    trainer.fit(&dev, |records, t| {
        t.checkpoint(&vocab_hash, meta.clone()).save(&ckpt_path)?;
        if let (Some(f), Some(p)) = (log_file.as_mut(), log_path.as_ref()) {
            for r in records {
                let line = serde_json::to_string(r).expect("record serializes");
                writeln!(f, "{line}").map_err(|e| Error::io(p, e))?;
            }
        }
        ran += 1;
        Ok(if a.stop_after.is_some_and(|n| ran >= n) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        })
    })?;
    log::info!("checkpoint at epoch {} written to {}", trainer.epoch, ckpt_path.display());
    Ok(())
}

struct Loaded {
    ckpt: Checkpoint,
    kb: KnowledgeBase,
    vocab: Vocabulary,
    meta: Option<InferenceMeta>,
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Loaded> {
    let (kb, vocab) = load_kb_vocab(cfg)?;
    let path = require(&cfg.paths.checkpoint, "checkpoint", "checkpoint")?;
    check_exists(&[path])?;
    let ckpt = Checkpoint::load(path)?;
    if ckpt.vocab_hash != vocab.fingerprint() {
        return Err(Error::VocabMismatch {
            expected: ckpt.vocab_hash,
            found: vocab.fingerprint(),
        });
    }
    let meta = serde_json::from_value(ckpt.meta.clone()).ok();
    Ok(Loaded {
        ckpt,
        kb,
        vocab,
        meta,
    })
}

fn link(mut cfg: RunConfig, from_file: bool, a: LinkArgs) -> Result<()> {
    override_path(&mut cfg.paths.kb, a.paths.kb);
    override_path(&mut cfg.paths.vocab, a.paths.vocab);
    override_path(&mut cfg.paths.checkpoint, a.paths.checkpoint);
    override_path(&mut cfg.paths.test, a.corpus);
    override_path(&mut cfg.paths.output, a.out);
    let loaded = load_checkpoint(&cfg)?;
    // flag > config file > checkpoint > default
    let (context, mut decode) = match (&loaded.meta, from_file) {
        (Some(m), false) => (m.context.clone(), m.decode.clone()),
        _ => (cfg.context.clone(), cfg.decode.clone()),
    };
    let mode = a
        .mode
        .map(LinkMode::from)
        .or(cfg.mode)
        .or(loaded.meta.as_ref().map(|m| m.mode))
        .unwrap_or(LinkMode::Collective);
    set(&mut decode.gamma, a.gamma);
    set(&mut decode.top_k, a.top_k);
    decode.validate()?;
    context.validate(loaded.ckpt.config())?;

    let corpus = require(&cfg.paths.test, "corpus", "test")?;
    let out = require(&cfg.paths.output, "out", "output")?;
    check_exists(&[corpus])?;
    let docs = load_corpus(corpus, &loaded.vocab, &loaded.kb)?;
    let params = &loaded.ckpt.params;
    let inputs = entity_inputs(&loaded.kb, &loaded.vocab, loaded.ckpt.config());
    let index = build_index(params, &inputs)?;
    let mut linker = Linker {
        params,
        index: &index,
        kb: &loaded.kb,
        context,
        decode,
    };
    if let Some(dev) = &a.tune_gamma {
        if mode != LinkMode::EndToEndExhaustive {
            return Err(Error::Config("--tune-gamma applies to end_to_end_exhaustive mode only".into()));
        }
        let dev_docs = load_corpus(dev, &loaded.vocab, &loaded.kb)?;
        let sweep = sweep_gamma(&linker, &dev_docs, &default_gamma_grid())?;
        log::info!("gamma {:.2} (dev strict F1 {:.4})", sweep.gamma, sweep.strict_f1);
        linker.decode.gamma = sweep.gamma;
    }
    let preds = linker.link_corpus(&docs, mode)?;
    write_predictions(out, &preds)?;
    log::info!("{} predictions for {} documents written to {}", preds.len(), docs.len(), out.display());
    Ok(())
}

/// One line of a candidate file: the entities retrieval kept for a mention.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRecord {
    doc_id: String,
    start: usize,
    end: usize,
    candidates: Vec<String>,
}

fn read_candidates(path: &Path) -> Result<HashMap<String, HashSet<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: CandidateRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.insert(mention_key(&r.doc_id, r.start, r.end), r.candidates.into_iter().collect());
    }
    Ok(out)
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.normalized != a.candidates.is_some() {
        return Err(Error::Config("--normalized and --candidates must be given together".into()));
    }
    check_exists(&[a.pred.as_path(), a.gold.as_path()])?;
    let preds = read_predictions(&a.pred)?;
    // only mentions matter here, so tokens map through an empty vocabulary
    let empty = Vocabulary::from_tokens(Vec::<String>::new())?;
    let gold: Vec<Document> = read_records(&a.gold)?
        .into_iter()
        .map(|r| r.into_document(&empty))
        .collect();
    let kb = a.kb.as_deref().map(KnowledgeBase::load).transpose()?;
    for d in &gold {
        d.validate(kb.as_ref())?;
    }
    let candidates = a.candidates.as_deref().map(read_candidates).transpose()?;
    let report = evaluate_predictions(&preds, &gold, &a.ks, candidates.as_ref())?;
    if report.strict.f1 > report.partial.f1 + 1e-12 {
        return Err(Error::MalformedInput(format!(
            "strict F1 {} exceeds partial F1 {}",
            report.strict.f1, report.partial.f1
        )));
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    collective: ThroughputReport,
    per_mention: ThroughputReport,
    ratio: f64,
}

fn bench(mut cfg: RunConfig, a: BenchArgs) -> Result<()> {
    override_path(&mut cfg.paths.kb, a.paths.kb);
    override_path(&mut cfg.paths.vocab, a.paths.vocab);
    override_path(&mut cfg.paths.checkpoint, a.paths.checkpoint);
    override_path(&mut cfg.paths.test, a.corpus);
    let (kb, vocab, params, encoder) = if a.init {
        let (kb, vocab) = load_kb_vocab(&cfg)?;
        cfg.encoder.vocab_size = vocab.len();
        let params = init_params(&cfg.encoder)?;
        (kb, vocab, params, cfg.encoder.clone())
    } else {
        let l = load_checkpoint(&cfg)?;
        let encoder = l.ckpt.config().clone();
        (l.kb, l.vocab, l.ckpt.params, encoder)
    };
    cfg.context.validate(&encoder)?;
    let corpus = require(&cfg.paths.test, "corpus", "test")?;
    check_exists(&[corpus])?;
    let docs = load_corpus(corpus, &vocab, &kb)?;
    let inputs = entity_inputs(&kb, &vocab, &encoder);
    let index = build_index(&params, &inputs)?;
    let linker = Linker {
        params: &params,
        index: &index,
        kb: &kb,
        context: cfg.context.clone(),
        decode: cfg.decode.clone(),
    };
    let collective = bench_throughput(&linker, &docs, LinkMode::Collective, a.runs)?;
    let per_mention = bench_throughput(&linker, &docs, LinkMode::PerMention, a.runs)?;
    let report = BenchReport {
        ratio: throughput_ratio(&collective, &per_mention),
        collective,
        per_mention,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}
