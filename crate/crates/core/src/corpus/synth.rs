//! Seeded generator for desk-scale linking corpora.
//!
//! Entities are grouped `ambiguity` at a time; every entity in a group shares
//! one surface form: up to `max_modifiers` modifier words followed by a head
//! word. Head words are shared between groups, so many surfaces differ only
//! in their modifiers. When `ambiguity > 1` each entity's KB name also carries a cue
//! word `q<r>`. A document draws a single topic `r`, mentions only entities
//! of rank `r`, and repeats `q<r>` in the filler before each mention, so the
//! gold entity is only recoverable from context. Modifier words also show up
//! as filler, which keeps span detection from being a pure vocabulary lookup.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::document::{Document, MentionAnnotation};
use super::kb::{Entity, KnowledgeBase};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub docs: usize,
    pub mentions_per_doc: usize,
    /// Number of plain filler words.
    pub vocab_size: usize,
    /// Distinct entities sharing each surface form.
    pub ambiguity: usize,
    /// Distinct head words; groups cycle through them.
    pub heads: usize,
    pub modifiers: usize,
    /// Most modifier words in one surface form.
    pub max_modifiers: usize,
    pub min_gap: usize,
    pub max_gap: usize,
    /// Probability that a filler slot holds a modifier word instead.
    pub distractor_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 100,
            docs: 100,
            mentions_per_doc: 16,
            vocab_size: 200,
            ambiguity: 1,
            heads: 8,
            modifiers: 12,
            max_modifiers: 1,
            min_gap: 3,
            max_gap: 10,
            distractor_rate: 0.1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.entities == 0 {
            return fail("entities must be at least 1".into());
        }
        if self.ambiguity == 0 {
            return fail("ambiguity must be at least 1".into());
        }
        if self.ambiguity > self.entities {
            return fail(format!(
                "ambiguity {} exceeds the entity count {}",
                self.ambiguity, self.entities
            ));
        }
        if self.heads == 0 {
            return fail("heads must be at least 1".into());
        }
        let groups = self.entities.div_ceil(self.ambiguity);
        let per_head = groups.div_ceil(self.heads.min(groups));
        let forms = surface_forms(self.modifiers, self.max_modifiers);
        if per_head > forms {
            return fail(format!(
                "{groups} surface forms do not fit in {} heads with {} modifiers",
                self.heads, self.modifiers
            ));
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be at least 1".into());
        }
        if self.min_gap > self.max_gap {
            return fail("min_gap must not exceed max_gap".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return fail("distractor_rate must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Distinct modifier subsets of size `0..=max` over `n` modifiers.
fn surface_forms(n: usize, max: usize) -> usize {
    let mut total = 0usize;
    let mut choose = 1usize;
    for k in 0..=max.min(n) {
        total = total.saturating_add(choose);
        choose = choose.saturating_mul(n - k) / (k + 1);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    pub kb: KnowledgeBase,
    pub docs: Vec<Document>,
}

struct Lexicon {
    /// surface tokens per group
    surfaces: Vec<Vec<String>>,
    cues: Vec<String>,
    modifiers: Vec<String>,
    fillers: Vec<String>,
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = spec.entities.div_ceil(spec.ambiguity);

    let modifiers: Vec<String> = (0..spec.modifiers).map(|k| format!("m{k}")).collect();
    let fillers: Vec<String> = (0..spec.vocab_size).map(|k| format!("w{k}")).collect();
    let cues: Vec<String> = if spec.ambiguity > 1 {
        (0..spec.ambiguity).map(|k| format!("q{k}")).collect()
    } else {
        Vec::new()
    };

    let heads = spec.heads.min(groups);
    let mut taken: HashSet<Vec<usize>> = HashSet::new();
    let mut surfaces = Vec::with_capacity(groups);
    for g in 0..groups {
        let head = g % heads;
        let surface = loop {
            let n_mod = rng.random_range(0..=spec.max_modifiers.min(modifiers.len()));
            let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, modifiers.len(), n_mod).into_vec();
            picks.sort_unstable();
            picks.push(modifiers.len() + head);
            if taken.insert(picks.clone()) {
                break picks;
            }
        };
        let mut words: Vec<String> = surface[..surface.len() - 1]
            .iter()
            .map(|&m| modifiers[m].clone())
            .collect();
        words.push(format!("h{head}"));
        surfaces.push(words);
    }
    let lex = Lexicon {
        surfaces,
        cues,
        modifiers,
        fillers,
    };

    let mut kb = KnowledgeBase::new();
    for row in 0..spec.entities {
        let (group, rank) = (row / spec.ambiguity, row % spec.ambiguity);
        let mut name = lex.surfaces[group].clone();
        if let Some(cue) = lex.cues.get(rank) {
            name.push(cue.clone());
        }
        kb.push(Entity {
            id: format!("E{row:05}"),
            name: name.join(" "),
        })?;
    }

    let vocab = Vocabulary::from_tokens(
        lex.fillers
            .iter()
            .chain(&lex.modifiers)
            .chain(&lex.cues)
            .cloned()
            .chain((0..heads).map(|h| format!("h{h}"))),
    )?;

    let mut docs = Vec::with_capacity(spec.docs);
    for d in 0..spec.docs {
        let topic = rng.random_range(0..spec.ambiguity);
        let cue = lex.cues.get(topic).map(String::as_str);
        let mut words: Vec<&str> = Vec::new();
        let mut mentions = Vec::with_capacity(spec.mentions_per_doc);
        for _ in 0..spec.mentions_per_doc {
            push_filler(&mut words, cue, &lex, spec, &mut rng);
            let row = loop {
                let row = rng.random_range(0..groups) * spec.ambiguity + topic;
                if row < spec.entities {
                    break row;
                }
            };
            let start = words.len();
            words.extend(lex.surfaces[row / spec.ambiguity].iter().map(String::as_str));
            mentions.push(MentionAnnotation {
                start,
                end: words.len() - 1,
                entity_id: kb.entity(row).id.clone(),
            });
        }
        push_filler(&mut words, None, &lex, spec, &mut rng);
        docs.push(Document {
            doc_id: format!("doc{d:05}"),
            tokens: words.iter().map(|w| vocab.id(w)).collect(),
            mentions,
        });
    }

    Ok(SyntheticCorpus { vocab, kb, docs })
}

fn push_filler<'a>(
    words: &mut Vec<&'a str>,
    cue: Option<&'a str>,
    lex: &'a Lexicon,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) {
    let gap = rng.random_range(spec.min_gap..=spec.max_gap);
    let cue_at = rng.random_range(0..=gap);
    for k in 0..=gap {
        if k == cue_at {
            if let Some(c) = cue {
                words.push(c);
            }
        }
        if k == gap {
            break;
        }
        let pool = if !lex.modifiers.is_empty() && rng.random_bool(spec.distractor_rate) {
            &lex.modifiers
        } else {
            &lex.fillers
        };
        words.push(pool.choose(rng).expect("non-empty pool"));
    }
}

/// Contiguous train/dev/test split by fractions of the document count.
pub fn split_documents(
    docs: Vec<Document>,
    train: f64,
    dev: f64,
) -> (Vec<Document>, Vec<Document>, Vec<Document>) {
    let n = docs.len();
    let n_train = ((n as f64) * train).round() as usize;
    let n_dev = (((n as f64) * dev).round() as usize).min(n - n_train.min(n));
    let mut rest = docs;
    let test = rest.split_off((n_train + n_dev).min(n));
    let dev = rest.split_off(n_train.min(n));
    (rest, dev, test)
}
