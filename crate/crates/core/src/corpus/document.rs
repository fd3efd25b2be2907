use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kb::KnowledgeBase;
use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};

/// A gold mention: inclusive token span `start..=end` and its KB identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MentionAnnotation {
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
}

impl MentionAnnotation {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<TokenId>,
    pub mentions: Vec<MentionAnnotation>,
}

impl Document {
    /// Checks span bounds and, when a KB is given, that every gold entity exists.
    pub fn validate(&self, kb: Option<&KnowledgeBase>) -> Result<()> {
        for m in &self.mentions {
            if m.end < m.start || m.end >= self.tokens.len() {
                return Err(Error::SpanOutOfRange {
                    start: m.start,
                    end: m.end,
                    len: self.tokens.len(),
                });
            }
            if let Some(kb) = kb {
                if kb.row(&m.entity_id).is_none() {
                    return Err(Error::UnknownEntity {
                        doc_id: self.doc_id.clone(),
                        entity_id: m.entity_id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_record(&self, vocab: &Vocabulary) -> DocumentRecord {
        DocumentRecord {
            doc_id: self.doc_id.clone(),
            tokens: self
                .tokens
                .iter()
                .map(|&t| vocab.token(t).unwrap_or("[UNK]").to_string())
                .collect(),
            mentions: self.mentions.clone(),
        }
    }
}

/// On-disk corpus line: tokens as strings, mentions as token-index spans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<MentionAnnotation>,
}

impl DocumentRecord {
    pub fn into_document(self, vocab: &Vocabulary) -> Document {
        Document {
            doc_id: self.doc_id,
            tokens: self.tokens.iter().map(|t| vocab.id(t)).collect(),
            mentions: self.mentions,
        }
    }
}

/// Reads raw records without vocabulary mapping or KB validation.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DocumentRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocumentRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads a corpus file, mapping tokens through `vocab` and rejecting gold
/// entities that are absent from `kb`.
pub fn load_corpus(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    kb: &KnowledgeBase,
) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_records(path)?
        .into_iter()
        .map(|r| r.into_document(vocab))
        .collect();
    for d in &docs {
        d.validate(Some(kb))?;
    }
    Ok(docs)
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[Document], vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(&d.to_record(vocab)).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
