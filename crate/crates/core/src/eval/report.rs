use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::metrics::{
    micro_prf, normalized_filter, ranking_metrics, LinkedSpan, MatchMode, Prf, RankedPrediction,
};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::index::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Ranking metrics over gold mentions; null when no mention is left to
    /// score (e.g. every gold filtered out in the normalized setting).
    pub p_at_1: Option<f64>,
    pub map: Option<f64>,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub strict: Prf,
    pub partial: Prf,
    pub n_mentions: usize,
    pub n_predictions: usize,
    /// Scored mentions whose gold is missing from the ranked list; they
    /// contribute 0 to MAP.
    pub gold_absent: usize,
    pub normalized: bool,
}

/// `doc_id:start:end`, the key shared by predictions, gold mentions and
/// candidate files.
pub fn mention_key(doc_id: &str, start: usize, end: usize) -> String {
    format!("{doc_id}:{start}:{end}")
}

/// Scores a prediction file against gold documents. Ranking metrics use the
/// prediction with the exact gold span (an empty list when there is none);
/// span metrics use every prediction. With `candidates`, ranking metrics are
/// restricted to mentions whose gold survived retrieval.
pub fn evaluate_predictions(
    preds: &[Prediction],
    gold_docs: &[Document],
    ks: &[usize],
    candidates: Option<&HashMap<String, HashSet<String>>>,
) -> Result<EvalReport> {
    let known: HashSet<&str> = gold_docs.iter().map(|d| d.doc_id.as_str()).collect();
    let missing: BTreeSet<&str> = preds
        .iter()
        .map(|p| p.doc_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MalformedInput(format!(
            "predictions reference documents missing from the gold corpus: {}",
            missing.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let by_key: HashMap<String, &Prediction> = preds
        .iter()
        .map(|p| (mention_key(&p.doc_id, p.start, p.end), p))
        .collect();
    let mut ranked = Vec::new();
    let mut gold_spans = Vec::new();
    for doc in gold_docs {
        for m in &doc.mentions {
            let key = mention_key(&doc.doc_id, m.start, m.end);
            ranked.push(RankedPrediction {
                ranked: by_key.get(&key).map(|p| p.ranked.clone()).unwrap_or_default(),
                gold: m.entity_id.clone(),
                key,
            });
            gold_spans.push(LinkedSpan::new(&doc.doc_id, m.start, m.end, &m.entity_id));
        }
    }
    let pred_spans: Vec<LinkedSpan> = preds
        .iter()
        .map(|p| LinkedSpan::new(&p.doc_id, p.start, p.end, &p.entity_id))
        .collect();
    let strict = micro_prf(&pred_spans, &gold_spans, MatchMode::Strict)?;
    let partial = micro_prf(&pred_spans, &gold_spans, MatchMode::Partial)?;
    debug_assert!(strict.f1 <= partial.f1 + 1e-12);

    let scored = match candidates {
        Some(c) => normalized_filter(&ranked, c)?,
        None => ranked,
    };
    let ranking = if scored.is_empty() {
        None
    } else {
        Some(ranking_metrics(&scored, ks)?)
    };
    Ok(EvalReport {
        p_at_1: ranking.as_ref().map(|r| r.p_at_1),
        map: ranking.as_ref().map(|r| r.map),
        recall_at_k: ranking
            .as_ref()
            .map(|r| r.recall_at_k.clone())
            .unwrap_or_default(),
        strict,
        partial,
        n_mentions: scored.len(),
        n_predictions: preds.len(),
        gold_absent: ranking.as_ref().map_or(0, |r| r.gold_absent),
        normalized: candidates.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::MentionAnnotation;

    fn doc() -> Document {
        Document {
            doc_id: "d".into(),
            tokens: vec![5; 10],
            mentions: vec![
                MentionAnnotation { start: 1, end: 2, entity_id: "A".into() },
                MentionAnnotation { start: 5, end: 5, entity_id: "B".into() },
            ],
        }
    }

    fn pred(start: usize, end: usize, e: &str, ranked: &[&str]) -> Prediction {
        Prediction {
            doc_id: "d".into(),
            start,
            end,
            entity_id: e.into(),
            score: 0.0,
            p: None,
            ranked: ranked.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn gold_predictions_score_one() {
        let preds = [pred(1, 2, "A", &["A", "B"]), pred(5, 5, "B", &["B"])];
        let r = evaluate_predictions(&preds, &[doc()], &[1, 10], None).unwrap();
        assert_eq!(r.p_at_1, Some(1.0));
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.strict.f1, 1.0);
        assert_eq!(r.partial.f1, 1.0);
    }

    #[test]
    fn fixture_counts() {
        // one exact hit, one shifted hit, one spurious prediction
        let preds = [
            pred(1, 2, "A", &["A"]),
            pred(4, 5, "B", &["B"]),
            pred(8, 8, "A", &["A"]),
        ];
        let r = evaluate_predictions(&preds, &[doc()], &[1], None).unwrap();
        assert!((r.strict.precision - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.strict.recall, 0.5);
        assert!((r.partial.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.partial.recall, 1.0);
        // the second gold has no exact-span prediction
        assert_eq!(r.p_at_1, Some(0.5));
        assert_eq!(r.gold_absent, 1);
    }

    #[test]
    fn unknown_document_is_listed() {
        let mut p = pred(1, 2, "A", &["A"]);
        p.doc_id = "zzz".into();
        let err = evaluate_predictions(&[p], &[doc()], &[1], None).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn normalized_flag() {
        let preds = [pred(1, 2, "A", &["A"]), pred(5, 5, "A", &["A"])];
        let mut c = HashMap::new();
        c.insert(mention_key("d", 1, 2), HashSet::from(["A".to_string()]));
        c.insert(mention_key("d", 5, 5), HashSet::from(["A".to_string()]));
        let r = evaluate_predictions(&preds, &[doc()], &[1], Some(&c)).unwrap();
        assert!(r.normalized);
        assert_eq!(r.n_mentions, 1);
        assert_eq!(r.p_at_1, Some(1.0));
    }
}
