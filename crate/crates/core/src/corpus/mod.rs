//! Data model, file formats, tokenization, segmentation and synthetic corpora.

mod document;
mod kb;
mod segment;
mod synth;
mod vocab;

pub use document::{load_corpus, read_records, save_corpus, Document, DocumentRecord, MentionAnnotation};
pub use kb::{Entity, KnowledgeBase};
pub use segment::{segment_document, Segment};
pub use synth::{generate_synthetic_corpus, split_documents, SyntheticCorpus, SyntheticSpec};
pub use vocab::{tokenize, TokenId, Vocabulary, CLS, PAD, RESERVED, SEP, UNK};
pub(crate) use vocab::hex;
