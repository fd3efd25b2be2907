use ndarray::{s, Array1, ArrayView1};

use crate::encoder::{ModelParams, TokenStates};
use crate::error::{Error, Result};

/// Mention vector plus the state-row span it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionRep {
    pub vector: Array1<f64>,
    pub span: (usize, usize),
    pub doc_id: String,
}

fn check_span(states: &TokenStates, (i, j): (usize, usize)) -> Result<()> {
    if i > j || j >= states.len() {
        return Err(Error::SpanOutOfRange {
            start: i,
            end: j,
            len: states.len(),
        });
    }
    Ok(())
}

/// `u = W [h_i; h_j] + b`, with `W: d x 2d`.
pub fn mention_rep(
    states: &TokenStates,
    span: (usize, usize),
    params: &ModelParams,
) -> Result<MentionRep> {
    check_span(states, span)?;
    let d = states.dim();
    let w = &params.mention_proj;
    let vector = w.slice(s![.., ..d]).dot(&states.0.row(span.0))
        + w.slice(s![.., d..]).dot(&states.0.row(span.1))
        + &params.mention_bias;
    Ok(MentionRep {
        vector,
        span,
        doc_id: String::new(),
    })
}

/// Mean of the state rows `i..=j`.
pub fn mention_rep_meanpool(states: &TokenStates, span: (usize, usize)) -> Result<MentionRep> {
    check_span(states, span)?;
    let n = (span.1 - span.0 + 1) as f64;
    let vector = states
        .0
        .slice(s![span.0..=span.1, ..])
        .sum_axis(ndarray::Axis(0))
        / n;
    Ok(MentionRep {
        vector,
        span,
        doc_id: String::new(),
    })
}

/// Dot-product compatibility `psi = u . v`.
pub fn score(u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    u.dot(&v)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Span logit `w_s . h_i + w_e . h_j + sum_{q=i..=j} w_m . h_q`.
pub fn span_logit(states: &TokenStates, (i, j): (usize, usize), params: &ModelParams) -> f64 {
    let h = &states.0;
    let inner: f64 = (i..=j).map(|q| params.span_inner.dot(&h.row(q))).sum();
    params.span_start.dot(&h.row(i)) + params.span_end.dot(&h.row(j)) + inner
}

/// Probability that state rows `i..=j` form a mention. Spans longer than
/// `max_len` are rejected.
pub fn span_probability(
    states: &TokenStates,
    span: (usize, usize),
    params: &ModelParams,
    max_len: usize,
) -> Result<f64> {
    check_span(states, span)?;
    if span.1 - span.0 + 1 > max_len {
        return Err(Error::SpanTooLong {
            start: span.0,
            end: span.1,
            max: max_len,
        });
    }
    Ok(sigmoid(span_logit(states, span, params)))
}
