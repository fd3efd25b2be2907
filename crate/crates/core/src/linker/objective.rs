//! Batch losses and their exact gradients through both encoders.

use std::collections::{BTreeMap, HashSet};

use ndarray::{s, Array1, Array2, Axis};

use super::examples::{Example, MentionTarget};
use super::loss::{bce_with_logit, ce_loss_grad};
use super::mining::CandidateSet;
use super::reps::{mention_rep, mention_rep_meanpool, sigmoid};
use crate::corpus::TokenId;
use crate::encoder::{ModelParams, TokenStates, BIO_TAGS};
use crate::error::{Error, Result};
use crate::index::{encode_bio, enumerate_spans, LinkMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Cross-entropy over candidates, mention vectors from the span projection.
    KnownSpan,
    /// Span-detection BCE over every span up to `max_span_len` plus
    /// cross-entropy on gold spans with mean-pooled mention vectors.
    Exhaustive {
        max_span_len: usize,
        detection_weight: f64,
    },
    /// Per-token BIO cross-entropy plus cross-entropy on gold spans with
    /// mean-pooled mention vectors.
    Bio { detection_weight: f64 },
}

impl Objective {
    pub fn for_mode(mode: LinkMode, max_span_len: usize, detection_weight: f64) -> Self {
        match mode {
            LinkMode::Collective | LinkMode::PerMention => Objective::KnownSpan,
            LinkMode::EndToEndExhaustive => Objective::Exhaustive {
                max_span_len,
                detection_weight,
            },
            LinkMode::EndToEndBio => Objective::Bio { detection_weight },
        }
    }

    pub fn uses_projection(&self) -> bool {
        matches!(self, Objective::KnownSpan)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    /// Mean detection loss per example (0 for known-span training).
    pub detection: f64,
    /// Mean cross-entropy per gold mention (0 when the batch has none).
    pub disambiguation: f64,
    pub total: f64,
    pub mentions: usize,
}

/// Mention vector for `target` under the representation `objective` scores with.
pub fn mention_vector(
    params: &ModelParams,
    states: &TokenStates,
    target: &MentionTarget,
    objective: &Objective,
) -> Result<Array1<f64>> {
    let span = (target.start, target.end);
    let rep = if objective.uses_projection() {
        mention_rep(states, span, params)?
    } else {
        mention_rep_meanpool(states, span)?
    };
    Ok(rep.vector)
}

/// Forward-only mention vectors for every gold mention of `example`.
pub fn example_mention_vectors(
    params: &ModelParams,
    example: &Example,
    objective: &Objective,
) -> Result<Vec<Array1<f64>>> {
    let (states, _) = params.mention_forward(&example.input)?;
    example
        .mentions
        .iter()
        .map(|m| mention_vector(params, &states, m, objective))
        .collect()
}

/// Loss of `batch` under fixed candidate sets, and its gradient w.r.t. every
/// parameter. `candidates[e][k]` belongs to mention `k` of example `e`;
/// `entity_inputs[r]` is the encoder input for KB row `r`.
pub fn batch_gradients(
    params: &ModelParams,
    entity_inputs: &[Vec<TokenId>],
    batch: &[Example],
    candidates: &[Vec<CandidateSet>],
    objective: &Objective,
) -> Result<(BatchLoss, ModelParams)> {
    let n_mentions: usize = batch.iter().map(|e| e.mentions.len()).sum();
    let n_examples = batch.len().max(1);
    let d = params.hidden_dim();

    // each distinct candidate entity is encoded once per batch
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for sets in candidates {
        for set in sets {
            for &r in &set.rows {
                let next = slots.len();
                slots.entry(r).or_insert(next);
            }
        }
    }
    let mut entity_fwd = Vec::with_capacity(slots.len());
    let mut slot_rows = vec![0; slots.len()];
    for (&row, &slot) in &slots {
        slot_rows[slot] = row;
    }
    for &row in &slot_rows {
        let input = entity_inputs.get(row).ok_or_else(|| {
            Error::MalformedInput(format!("candidate row {row} has no entity input"))
        })?;
        entity_fwd.push(params.entity_forward(input)?);
    }
    let vectors: Vec<Array1<f64>> = entity_fwd
        .iter()
        .map(|(states, _)| states.0.row(0).to_owned())
        .collect();

    let mut grads = params.zeros_like();
    let mut d_vectors: Vec<Array1<f64>> = vec![Array1::zeros(d); slots.len()];
    let mut loss = BatchLoss {
        mentions: n_mentions,
        ..Default::default()
    };
    let mention_scale = if n_mentions > 0 {
        1.0 / n_mentions as f64
    } else {
        0.0
    };

    for (example, sets) in batch.iter().zip(candidates) {
        if sets.len() != example.mentions.len() {
            return Err(Error::MalformedInput(
                "one candidate set is required per mention".into(),
            ));
        }
        let (states, cache) = params.mention_forward(&example.input)?;
        let mut d_states = Array2::zeros((states.len(), d));

        for (target, set) in example.mentions.iter().zip(sets) {
            let u = mention_vector(params, &states, target, objective)?;
            let scores: Vec<f64> = set
                .rows
                .iter()
                .map(|r| u.dot(&vectors[slots[r]]))
                .collect();
            let (ce, g) = ce_loss_grad(&scores, set.gold_position);
            loss.disambiguation += ce;
            let mut du = Array1::<f64>::zeros(d);
            for (r, gc) in set.rows.iter().zip(g) {
                let gc = gc * mention_scale;
                let slot = slots[r];
                du.scaled_add(gc, &vectors[slot]);
                d_vectors[slot].scaled_add(gc, &u);
            }
            backprop_mention(params, &states, target, objective, &du, &mut d_states, &mut grads);
        }

        match *objective {
            Objective::KnownSpan => {}
            Objective::Exhaustive {
                max_span_len,
                detection_weight,
            } => {
                let l = span_detection(
                    params,
                    &states,
                    &example.mentions,
                    max_span_len,
                    detection_weight / n_examples as f64,
                    &mut d_states,
                    &mut grads,
                );
                loss.detection += l;
            }
            Objective::Bio { detection_weight } => {
                let l = bio_detection(
                    params,
                    &states,
                    &example.mentions,
                    detection_weight / n_examples as f64,
                    &mut d_states,
                    &mut grads,
                );
                loss.detection += l;
            }
        }
        params
            .mention_encoder
            .backward(&cache, &d_states, &mut grads.mention_encoder);
    }

    for ((states, cache), dv) in entity_fwd.iter().zip(&d_vectors) {
        let mut d_states = Array2::zeros((states.len(), d));
        d_states.row_mut(0).assign(dv);
        params
            .entity_encoder()
            .backward(cache, &d_states, grads.entity_encoder_mut());
    }

    loss.disambiguation *= mention_scale;
    loss.detection /= n_examples as f64;
    let weight = match *objective {
        Objective::KnownSpan => 0.0,
        Objective::Exhaustive {
            detection_weight, ..
        }
        | Objective::Bio { detection_weight } => detection_weight,
    };
    loss.total = weight * loss.detection + loss.disambiguation;
    if !loss.total.is_finite() {
        return Err(Error::Divergence(format!("non-finite batch loss {}", loss.total)));
    }
    Ok((loss, grads))
}

fn backprop_mention(
    params: &ModelParams,
    states: &TokenStates,
    target: &MentionTarget,
    objective: &Objective,
    du: &Array1<f64>,
    d_states: &mut Array2<f64>,
    grads: &mut ModelParams,
) {
    let d = states.dim();
    let (i, j) = (target.start, target.end);
    if objective.uses_projection() {
        let hi = states.0.row(i);
        let hj = states.0.row(j);
        for (r, &g) in du.iter().enumerate() {
            let mut row = grads.mention_proj.row_mut(r);
            row.slice_mut(s![..d]).scaled_add(g, &hi);
            row.slice_mut(s![d..]).scaled_add(g, &hj);
        }
        grads.mention_bias += du;
        let w = &params.mention_proj;
        let mut di = d_states.row_mut(i);
        di += &w.slice(s![.., ..d]).t().dot(du);
        let mut dj = d_states.row_mut(j);
        dj += &w.slice(s![.., d..]).t().dot(du);
    } else {
        let share = 1.0 / (j - i + 1) as f64;
        for q in i..=j {
            d_states.row_mut(q).scaled_add(share, du);
        }
    }
}

/// Mean BCE over all content spans of one example; accumulates `scale` times
/// its gradient. Returns the unscaled mean.
fn span_detection(
    params: &ModelParams,
    states: &TokenStates,
    gold: &[MentionTarget],
    max_span_len: usize,
    scale: f64,
    d_states: &mut Array2<f64>,
    grads: &mut ModelParams,
) -> f64 {
    let n = states.len().saturating_sub(2);
    let spans = enumerate_spans(n, max_span_len);
    if spans.is_empty() {
        return 0.0;
    }
    let gold: HashSet<(usize, usize)> = gold.iter().map(|m| (m.start - 1, m.end - 1)).collect();
    let content = states.0.slice(s![1..=n, ..]);
    let a = content.dot(&params.span_start);
    let b = content.dot(&params.span_end);
    let c = content.dot(&params.span_inner);
    let mut prefix = vec![0.0; n + 1];
    for t in 0..n {
        prefix[t + 1] = prefix[t] + c[t];
    }
    let per_span = scale / spans.len() as f64;
    let mut coef_start = Array1::<f64>::zeros(n);
    let mut coef_end = Array1::<f64>::zeros(n);
    let mut diff = vec![0.0; n + 1];
    let mut total = 0.0;
    for &(i, j) in &spans {
        let z = a[i] + b[j] + prefix[j + 1] - prefix[i];
        let positive = gold.contains(&(i, j));
        total += bce_with_logit(z, positive);
        let dz = (sigmoid(z) - if positive { 1.0 } else { 0.0 }) * per_span;
        coef_start[i] += dz;
        coef_end[j] += dz;
        diff[i] += dz;
        diff[j + 1] -= dz;
    }
    let mut coef_inner = Array1::<f64>::zeros(n);
    let mut run = 0.0;
    for t in 0..n {
        run += diff[t];
        coef_inner[t] = run;
    }
    grads.span_start += &content.t().dot(&coef_start);
    grads.span_end += &content.t().dot(&coef_end);
    grads.span_inner += &content.t().dot(&coef_inner);
    for t in 0..n {
        let mut row = d_states.row_mut(t + 1);
        row.scaled_add(coef_start[t], &params.span_start);
        row.scaled_add(coef_end[t], &params.span_end);
        row.scaled_add(coef_inner[t], &params.span_inner);
    }
    total / spans.len() as f64
}

/// Mean per-token tag cross-entropy over content tokens of one example.
fn bio_detection(
    params: &ModelParams,
    states: &TokenStates,
    gold: &[MentionTarget],
    scale: f64,
    d_states: &mut Array2<f64>,
    grads: &mut ModelParams,
) -> f64 {
    let n = states.len().saturating_sub(2);
    if n == 0 {
        return 0.0;
    }
    let spans: Vec<(usize, usize)> = gold.iter().map(|m| (m.start - 1, m.end - 1)).collect();
    let tags = encode_bio(&spans, n);
    let content = states.0.slice(s![1..=n, ..]);
    let mut logits = content.dot(&params.bio_weight) + &params.bio_bias;
    let mut total = 0.0;
    let per_token = scale / n as f64;
    for (mut row, tag) in logits.axis_iter_mut(Axis(0)).zip(&tags) {
        let (ce, g) = ce_loss_grad(row.as_slice().expect("row-major logits"), tag.index());
        total += ce;
        for k in 0..BIO_TAGS {
            row[k] = g[k] * per_token;
        }
    }
    // `logits` now holds d(loss)/d(logits)
    grads.bio_weight += &content.t().dot(&logits);
    grads.bio_bias += &logits.sum_axis(Axis(0));
    let d_content = logits.dot(&params.bio_weight.t());
    let mut slice = d_states.slice_mut(s![1..=n, ..]);
    slice += &d_content;
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderConfig};
    use crate::linker::{ce_loss, mention_detection_loss, span_probability};

    fn setup() -> (ModelParams, Vec<Vec<TokenId>>) {
        let p = init_params(&EncoderConfig {
            hidden_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 8,
            max_seq_len: 16,
            vocab_size: 12,
            seed: 4,
            init_std: 0.3,
            ..Default::default()
        })
        .unwrap();
        let inputs = (0..5).map(|r| vec![2, 4 + r as TokenId, 10, 3]).collect();
        (p, inputs)
    }

    fn example() -> Example {
        Example {
            input: vec![2, 5, 6, 7, 8, 9, 3],
            mentions: vec![
                MentionTarget { start: 1, end: 2, gold: 1 },
                MentionTarget { start: 4, end: 4, gold: 3 },
            ],
        }
    }

    fn sets() -> Vec<CandidateSet> {
        vec![
            CandidateSet { rows: vec![1, 0, 2], gold_position: 0 },
            CandidateSet { rows: vec![4, 3], gold_position: 1 },
        ]
    }

    #[test]
    fn known_span_loss_matches_direct_scoring() {
        let (p, inputs) = setup();
        let (loss, _) =
            batch_gradients(&p, &inputs, &[example()], &[sets()], &Objective::KnownSpan).unwrap();
        let states = crate::encoder::encode_sequence(&p, &example().input).unwrap();
        let mut expected = 0.0;
        for (m, set) in example().mentions.iter().zip(sets()) {
            let u = mention_rep(&states, (m.start, m.end), &p).unwrap().vector;
            let scores: Vec<f64> = set
                .rows
                .iter()
                .map(|&r| u.dot(&crate::encoder::encode_entity(&p, &inputs[r]).unwrap()))
                .collect();
            expected += ce_loss(&scores, set.gold_position);
        }
        assert!((loss.total - expected / 2.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_detection_matches_reference() {
        let (p, inputs) = setup();
        let obj = Objective::Exhaustive { max_span_len: 3, detection_weight: 1.0 };
        let (loss, _) = batch_gradients(&p, &inputs, &[example()], &[sets()], &obj).unwrap();
        let states = crate::encoder::encode_sequence(&p, &example().input).unwrap();
        let spans = enumerate_spans(5, 3);
        let probs: Vec<f64> = spans
            .iter()
            .map(|&(i, j)| span_probability(&states, (i + 1, j + 1), &p, 3).unwrap())
            .collect();
        let expected = mention_detection_loss(&probs, &[(0, 1), (3, 3)], &spans);
        assert!((loss.detection - expected).abs() < 1e-12);
    }

    #[test]
    fn single_candidate_has_zero_scoring_gradient() {
        let (p, inputs) = setup();
        let single = vec![
            CandidateSet { rows: vec![1], gold_position: 0 },
            CandidateSet { rows: vec![3], gold_position: 0 },
        ];
        let (loss, g) =
            batch_gradients(&p, &inputs, &[example()], &[single], &Objective::KnownSpan).unwrap();
        assert_eq!(loss.total, 0.0);
        for (_, t) in g.tensors() {
            assert!(t.data.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_span_scorer_still_gets_gradient() {
        let (mut p, inputs) = setup();
        p.span_start.fill(0.0);
        p.span_end.fill(0.0);
        p.span_inner.fill(0.0);
        let obj = Objective::Exhaustive { max_span_len: 3, detection_weight: 1.0 };
        let (_, g) = batch_gradients(&p, &inputs, &[example()], &[sets()], &obj).unwrap();
        assert!(g.span_start.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn empty_batch_mentions_leave_detection_only() {
        let (p, inputs) = setup();
        let ex = Example { input: vec![2, 5, 6, 3], mentions: vec![] };
        let obj = Objective::Exhaustive { max_span_len: 2, detection_weight: 1.0 };
        let (loss, _) = batch_gradients(&p, &inputs, &[ex], &[vec![]], &obj).unwrap();
        assert_eq!(loss.disambiguation, 0.0);
        assert_eq!(loss.total, loss.detection);
        assert!(loss.detection > 0.0);
    }
}
