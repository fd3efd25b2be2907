use serde::{Deserialize, Serialize};

use crate::corpus::{segment_document, Document, KnowledgeBase, TokenId};
use crate::encoder::{sequence_input, EncoderConfig};
use crate::error::{Error, Result};
use crate::index::{mention_window, LinkMode};

/// How documents are cut into encoder inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    pub max_mentions: usize,
    pub max_tokens: usize,
    /// Per-mention input length, markers included.
    pub context_window: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            max_mentions: 8,
            max_tokens: 512,
            context_window: 128,
        }
    }
}

impl ContextConfig {
    /// Segment token cap after reserving two encoder positions for markers.
    pub fn segment_tokens(&self, encoder: &EncoderConfig) -> usize {
        self.max_tokens.min(encoder.max_seq_len - 2)
    }

    pub fn validate(&self, encoder: &EncoderConfig) -> Result<()> {
        if self.max_mentions == 0 {
            return Err(Error::Config("max_mentions must be at least 1".into()));
        }
        if self.max_tokens < 3 {
            return Err(Error::Config("max_tokens must be at least 3".into()));
        }
        if self.context_window < 3 || self.context_window > encoder.max_seq_len {
            return Err(Error::Config(format!(
                "context_window must lie in 3..={}",
                encoder.max_seq_len
            )));
        }
        Ok(())
    }
}

/// A gold mention inside an encoder input: state rows `start..=end` and the
/// gold KB row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MentionTarget {
    pub start: usize,
    pub end: usize,
    pub gold: usize,
}

/// One encoder input with its gold mentions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: Vec<TokenId>,
    pub mentions: Vec<MentionTarget>,
}

impl Example {
    /// Number of content tokens (markers excluded).
    pub fn content_len(&self) -> usize {
        self.input.len().saturating_sub(2)
    }
}

/// Builds training/evaluation inputs for `mode`.
///
/// Collective mode uses one input per segment; per-mention mode uses one
/// input per mention, cut from the unsegmented document. End-to-end modes cut
/// by length only, as inference must, and keep inputs without mentions;
/// known-span modes drop them.
pub fn build_examples(
    docs: &[Document],
    kb: &KnowledgeBase,
    mode: LinkMode,
    context: &ContextConfig,
    encoder: &EncoderConfig,
) -> Result<Vec<Example>> {
    context.validate(encoder)?;
    let gold = |doc: &Document, id: &str| {
        kb.row(id).ok_or_else(|| Error::UnknownEntity {
            doc_id: doc.doc_id.clone(),
            entity_id: id.to_string(),
        })
    };
    let mut out = Vec::new();
    for doc in docs {
        match mode {
            LinkMode::PerMention => {
                for m in &doc.mentions {
                    let (lo, hi) =
                        mention_window(doc.tokens.len(), m.start, m.end, context.context_window);
                    out.push(Example {
                        input: sequence_input(&doc.tokens[lo..hi]),
                        mentions: vec![MentionTarget {
                            start: m.start - lo + 1,
                            end: m.end - lo + 1,
                            gold: gold(doc, &m.entity_id)?,
                        }],
                    });
                }
            }
            _ => {
                let cap = context.segment_tokens(encoder);
                let max_mentions = if mode.is_end_to_end() {
                    usize::MAX
                } else {
                    context.max_mentions
                };
                for seg in segment_document(doc, max_mentions, cap)? {
                    if seg.doc.mentions.is_empty() && !mode.is_end_to_end() {
                        continue;
                    }
                    let mentions = seg
                        .doc
                        .mentions
                        .iter()
                        .map(|m| {
                            Ok(MentionTarget {
                                start: m.start + 1,
                                end: m.end + 1,
                                gold: gold(doc, &m.entity_id)?,
                            })
                        })
                        .collect::<Result<_>>()?;
                    out.push(Example {
                        input: sequence_input(&seg.doc.tokens),
                        mentions,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};

    #[test]
    fn modes_cover_every_mention_once() {
        let c = generate_synthetic_corpus(
            &SyntheticSpec {
                entities: 20,
                docs: 6,
                mentions_per_doc: 11,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let enc = EncoderConfig {
            vocab_size: c.vocab.len(),
            ..Default::default()
        };
        let ctx = ContextConfig::default();
        let total: usize = c.docs.iter().map(|d| d.mentions.len()).sum();
        for mode in [LinkMode::Collective, LinkMode::PerMention, LinkMode::EndToEndExhaustive] {
            let ex = build_examples(&c.docs, &c.kb, mode, &ctx, &enc).unwrap();
            assert_eq!(ex.iter().map(|e| e.mentions.len()).sum::<usize>(), total);
            for e in &ex {
                assert!(e.input.len() <= enc.max_seq_len);
                for m in &e.mentions {
                    assert!(m.start >= 1 && m.end < e.input.len() - 1);
                }
            }
        }
        let collective = build_examples(&c.docs, &c.kb, LinkMode::Collective, &ctx, &enc).unwrap();
        assert!(collective.iter().all(|e| e.mentions.len() <= 8));
        assert_eq!(collective.len(), 12);
    }
}
