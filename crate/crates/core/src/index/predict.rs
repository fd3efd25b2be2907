use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decode::{decode_bio_spans, decode_end_to_end, DecodeConfig, SpanPrediction};
use super::EntityIndex;
use crate::corpus::{segment_document, Document, KnowledgeBase};
use crate::encoder::{encode_sequence, sequence_input, ModelParams};
use crate::error::{Error, Result};
use crate::linker::{mention_rep, ContextConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    /// Gold spans; one encoder pass per segment.
    Collective,
    /// Gold spans; one encoder pass per mention over its context window.
    PerMention,
    EndToEndExhaustive,
    EndToEndBio,
}

impl LinkMode {
    pub fn is_end_to_end(self) -> bool {
        matches!(self, LinkMode::EndToEndExhaustive | LinkMode::EndToEndBio)
    }
}

/// One line of a prediction file. `score` is the dot product with the chosen
/// entity; `p` is the span probability in end-to-end modes and null otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prediction {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
    pub score: f64,
    pub p: Option<f64>,
    /// Best-first entity ids.
    pub ranked: Vec<String>,
}

/// Content-token window of at most `window - 2` tokens around `start..=end`,
/// centered where the document allows. Returns the half-open range.
pub fn mention_window(doc_len: usize, start: usize, end: usize, window: usize) -> (usize, usize) {
    let budget = window.saturating_sub(2).max(end - start + 1);
    let extra = budget - (end - start + 1);
    let lo = start.saturating_sub(extra / 2);
    let hi = (lo + budget).min(doc_len);
    let lo = hi.saturating_sub(budget).min(lo);
    (lo, hi)
}

/// Inference front end over a cached index.
pub struct Linker<'a> {
    pub params: &'a ModelParams,
    pub index: &'a EntityIndex,
    pub kb: &'a KnowledgeBase,
    pub context: ContextConfig,
    pub decode: DecodeConfig,
}

impl<'a> Linker<'a> {
    fn prediction(&self, doc_id: &str, start: usize, end: usize, span: &SpanPrediction) -> Prediction {
        Prediction {
            doc_id: doc_id.to_string(),
            start,
            end,
            entity_id: self.kb.entity(span.row).id.clone(),
            score: span.score,
            p: Some(span.p),
            ranked: span
                .ranked
                .iter()
                .map(|&(r, _)| self.kb.entity(r).id.clone())
                .collect(),
        }
    }

    fn known_span(
        &self,
        doc_id: &str,
        start: usize,
        end: usize,
        link: super::LinkResult,
    ) -> Prediction {
        Prediction {
            doc_id: doc_id.to_string(),
            start,
            end,
            entity_id: self.kb.entity(link.row).id.clone(),
            score: link.score,
            p: None,
            ranked: link
                .ranked
                .iter()
                .map(|&(r, _)| self.kb.entity(r).id.clone())
                .collect(),
        }
    }

    /// Predictions for one document, in mention (or span) order.
    pub fn link_document(&self, doc: &Document, mode: LinkMode) -> Result<Vec<Prediction>> {
        let k = self.decode.top_k;
        let max_tokens = self.context.segment_tokens(&self.params.config);
        let mut out = Vec::new();
        match mode {
            LinkMode::Collective => {
                for seg in segment_document(doc, self.context.max_mentions, max_tokens)? {
                    if seg.doc.mentions.is_empty() {
                        continue;
                    }
                    let states = encode_sequence(self.params, &sequence_input(&seg.doc.tokens))?;
                    for m in &seg.doc.mentions {
                        let u = mention_rep(&states, (m.start + 1, m.end + 1), self.params)?;
                        let link = self.index.link(u.vector.view(), k)?;
                        out.push(self.known_span(
                            &doc.doc_id,
                            m.start + seg.offset,
                            m.end + seg.offset,
                            link,
                        ));
                    }
                }
            }
            LinkMode::PerMention => {
                for m in &doc.mentions {
                    let (lo, hi) =
                        mention_window(doc.tokens.len(), m.start, m.end, self.context.context_window);
                    let states = encode_sequence(self.params, &sequence_input(&doc.tokens[lo..hi]))?;
                    let u = mention_rep(&states, (m.start - lo + 1, m.end - lo + 1), self.params)?;
                    let link = self.index.link(u.vector.view(), k)?;
                    out.push(self.known_span(&doc.doc_id, m.start, m.end, link));
                }
            }
            LinkMode::EndToEndExhaustive | LinkMode::EndToEndBio => {
                // gold spans are not visible at inference: cut by length only
                let bare = Document {
                    doc_id: doc.doc_id.clone(),
                    tokens: doc.tokens.clone(),
                    mentions: Vec::new(),
                };
                for seg in segment_document(&bare, usize::MAX, max_tokens)? {
                    let states = encode_sequence(self.params, &sequence_input(&seg.doc.tokens))?;
                    let spans = if mode == LinkMode::EndToEndExhaustive {
                        decode_end_to_end(&states, self.params, self.index, &self.decode)?
                    } else {
                        decode_bio_spans(&states, self.params, self.index, k)?
                    };
                    for s in &spans {
                        out.push(self.prediction(
                            &doc.doc_id,
                            s.start + seg.offset,
                            s.end + seg.offset,
                            s,
                        ));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Documents are processed in parallel on the current rayon pool; output
    /// order follows input order.
    pub fn link_corpus(&self, docs: &[Document], mode: LinkMode) -> Result<Vec<Prediction>> {
        let per_doc: Vec<Vec<Prediction>> = docs
            .par_iter()
            .map(|d| self.link_document(d, mode))
            .collect::<Result<_>>()?;
        Ok(per_doc.into_iter().flatten().collect())
    }
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).expect("prediction serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
