//! Cached entity index, exact inner-product search and the inference decoders.

mod decode;
mod predict;
mod spans;

pub use decode::{decode_end_to_end, DecodeConfig, OverlapPolicy, SpanPrediction};
pub use predict::{
    mention_window, read_predictions, write_predictions, LinkMode, Linker, Prediction,
};
pub use spans::{decode_bio, encode_bio, enumerate_spans, span_count, BioTag};

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::corpus::{tokenize, KnowledgeBase, TokenId, Vocabulary};
use crate::encoder::{encode_entity, entity_input, EncoderConfig, ModelParams};
use crate::error::{Error, Result};

/// Marked, truncated encoder inputs for every KB row, in row order.
pub fn entity_inputs(kb: &KnowledgeBase, vocab: &Vocabulary, config: &EncoderConfig) -> Vec<Vec<TokenId>> {
    kb.entities()
        .iter()
        .map(|e| entity_input(&tokenize(&e.name, vocab), config))
        .collect()
}

/// Pre-computed entity vectors, row-aligned with the knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityIndex {
    matrix: Array2<f64>,
    fingerprint: String,
}

/// Outcome of linking one mention against the full index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkResult {
    pub row: usize,
    pub score: f64,
    /// Best-first `(row, score)` pairs, at most `k` long.
    pub ranked: Vec<(usize, f64)>,
}

/// Encodes every entity input with the entity encoder. Rows are computed
/// independently, so the result does not depend on the thread count.
pub fn build_index(params: &ModelParams, inputs: &[Vec<TokenId>]) -> Result<EntityIndex> {
    let d = params.hidden_dim();
    let rows: Vec<Array1<f64>> = inputs
        .par_iter()
        .map(|ids| encode_entity(params, ids))
        .collect::<Result<_>>()?;
    let mut matrix = Array2::zeros((rows.len(), d));
    for (r, v) in rows.iter().enumerate() {
        matrix.row_mut(r).assign(v);
    }
    Ok(EntityIndex {
        matrix,
        fingerprint: params.fingerprint(),
    })
}

/// Ranking order: higher score first, lower row on ties.
pub(crate) fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl EntityIndex {
    pub fn from_matrix(matrix: Array2<f64>, fingerprint: impl Into<String>) -> Self {
        Self {
            matrix,
            fingerprint: fingerprint.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn row(&self, r: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(r)
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// True when the index was built from exactly these parameters.
    pub fn is_current(&self, params: &ModelParams) -> bool {
        self.fingerprint == params.fingerprint()
    }

    /// Scores of `u` against every row.
    pub fn scores(&self, u: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&u)
    }

    /// Exact maximum inner-product search over all rows, plus the `k` best.
    pub fn link(&self, u: ArrayView1<f64>, k: usize) -> Result<LinkResult> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let scores = self.scores(u);
        let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        let k = k.clamp(1, all.len());
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank_order);
            all.truncate(k);
        }
        all.sort_by(rank_order);
        let (row, score) = all[0];
        Ok(LinkResult {
            row,
            score,
            ranked: all,
        })
    }
}

/// Argmax entity for mention vector `u`, with the `k` best rows.
pub fn link_mention(u: ArrayView1<f64>, index: &EntityIndex, k: usize) -> Result<LinkResult> {
    index.link(u, k)
}
