//! Collective dual-encoder entity linking: a transformer mention encoder that
//! resolves every mention of a segment in one pass, an entity encoder whose
//! outputs are cached in an exact inner-product index, and an end-to-end
//! variant that also detects mention spans.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod linker;

pub use corpus::{Document, KnowledgeBase, Vocabulary};
pub use encoder::{Checkpoint, EncoderConfig, ModelParams};
pub use error::{Error, ErrorKind, Result};
pub use eval::EvalReport;
pub use index::{build_index, EntityIndex, LinkMode, Linker, Prediction};
pub use linker::{ContextConfig, TrainConfig, Trainer};
