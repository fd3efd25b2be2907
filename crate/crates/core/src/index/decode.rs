use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::spans::{decode_bio, enumerate_spans, BioTag};
use super::EntityIndex;
use crate::encoder::{ModelParams, TokenStates};
use crate::error::{Error, Result};
use crate::linker::{mention_rep_meanpool, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapPolicy {
    /// Keep spans by descending probability, dropping any that overlap a kept one.
    Greedy,
    Permit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub gamma: f64,
    pub max_span_len: usize,
    pub overlap: OverlapPolicy,
    /// Length of the ranked entity list kept per prediction.
    pub top_k: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            max_span_len: 10,
            overlap: OverlapPolicy::Greedy,
            top_k: 64,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "decode.gamma must lie strictly between 0 and 1, got {}",
                self.gamma
            )));
        }
        if self.max_span_len == 0 {
            return Err(Error::Config("decode.max_span_len must be at least 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("decode.top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// A detected and linked span in content coordinates (marker rows removed).
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub start: usize,
    pub end: usize,
    pub row: usize,
    pub score: f64,
    pub p: f64,
    pub ranked: Vec<(usize, f64)>,
}

/// Span probabilities for every content span up to `max_len` tokens. States
/// are those of a marked sequence; rows `1..len-1` are content. Spans are
/// returned in content coordinates, in enumeration order.
pub(crate) fn content_span_probs(
    states: &TokenStates,
    params: &ModelParams,
    max_len: usize,
) -> Vec<((usize, usize), f64)> {
    let n = states.len().saturating_sub(2);
    if n == 0 {
        return Vec::new();
    }
    let content = states.0.slice(s![1..=n, ..]);
    let start = content.dot(&params.span_start);
    let end = content.dot(&params.span_end);
    let inner = content.dot(&params.span_inner);
    let mut prefix = vec![0.0; n + 1];
    for t in 0..n {
        prefix[t + 1] = prefix[t] + inner[t];
    }
    enumerate_spans(n, max_len)
        .into_iter()
        .map(|(i, j)| {
            let z = start[i] + end[j] + (prefix[j + 1] - prefix[i]);
            ((i, j), sigmoid(z))
        })
        .collect()
}

fn link_span(
    states: &TokenStates,
    (i, j): (usize, usize),
    p: f64,
    index: &EntityIndex,
    top_k: usize,
) -> Result<SpanPrediction> {
    let rep = mention_rep_meanpool(states, (i + 1, j + 1))?;
    let link = index.link(rep.vector.view(), top_k)?;
    Ok(SpanPrediction {
        start: i,
        end: j,
        row: link.row,
        score: link.score,
        p,
        ranked: link.ranked,
    })
}

/// Exhaustive-span decoding: keep spans with `p > gamma`, resolve overlaps
/// per `cfg.overlap`, and link each kept span by its mean-pooled vector.
/// Output is sorted by start, then end.
pub fn decode_end_to_end(
    states: &TokenStates,
    params: &ModelParams,
    index: &EntityIndex,
    cfg: &DecodeConfig,
) -> Result<Vec<SpanPrediction>> {
    let mut accepted: Vec<((usize, usize), f64)> = content_span_probs(states, params, cfg.max_span_len)
        .into_iter()
        .filter(|&(_, p)| p > cfg.gamma)
        .collect();
    let kept = match cfg.overlap {
        OverlapPolicy::Permit => accepted,
        OverlapPolicy::Greedy => {
            accepted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut kept: Vec<((usize, usize), f64)> = Vec::new();
            for cand in accepted {
                let (i, j) = cand.0;
                if kept.iter().all(|&((a, b), _)| j < a || b < i) {
                    kept.push(cand);
                }
            }
            kept
        }
    };
    let mut out = kept
        .into_iter()
        .map(|(span, p)| link_span(states, span, p, index, cfg.top_k))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|p| (p.start, p.end));
    Ok(out)
}

/// Per-token tag distribution from the BIO head over content rows.
pub(crate) fn bio_probabilities(states: &TokenStates, params: &ModelParams) -> Array2<f64> {
    let n = states.len().saturating_sub(2);
    let content = states.0.slice(s![1..1 + n, ..]);
    let mut logits = content.dot(&params.bio_weight) + &params.bio_bias;
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

/// BIO-tagging decoding: argmax tag per content token, spans from
/// [`decode_bio`], each linked by its mean-pooled vector. `p` is the mean
/// probability of the chosen tags over the span.
pub fn decode_bio_spans(
    states: &TokenStates,
    params: &ModelParams,
    index: &EntityIndex,
    top_k: usize,
) -> Result<Vec<SpanPrediction>> {
    let probs = bio_probabilities(states, params);
    let (tags, confidence): (Vec<BioTag>, Vec<f64>) = probs
        .axis_iter(Axis(0))
        .map(|row| {
            let best = (0..row.len())
                .fold(0, |b, k| if row[k] > row[b] { k } else { b });
            (BioTag::from_index(best), row[best])
        })
        .unzip();
    let confidence = Array1::from(confidence);
    decode_bio(&tags)
        .into_iter()
        .map(|(i, j)| {
            let p = confidence.slice(s![i..=j]).mean().unwrap_or(0.0);
            link_span(states, (i, j), p, index, top_k)
        })
        .collect()
}
