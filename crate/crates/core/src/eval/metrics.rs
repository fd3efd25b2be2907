use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A ranked entity list for one mention. An empty list means the model
/// produced nothing for the mention; it scores as if the gold were absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub key: String,
    pub ranked: Vec<String>,
    pub gold: String,
}

impl RankedPrediction {
    /// 1-based rank of the gold entity.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|e| *e == self.gold).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingScores {
    pub p_at_1: f64,
    /// Mean reciprocal rank of the single gold; 0 where it is absent.
    pub map: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub n_mentions: usize,
    /// Mentions whose gold never appears in the ranked list.
    pub gold_absent: usize,
}

pub fn ranking_metrics(preds: &[RankedPrediction], ks: &[usize]) -> Result<RankingScores> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let n = preds.len() as f64;
    let ranks: Vec<Option<usize>> = preds.iter().map(RankedPrediction::gold_rank).collect();
    let p_at_1 = ranks.iter().filter(|r| **r == Some(1)).count() as f64 / n;
    let map = ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / n;
    let recall_at_k = ks
        .iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            (k, hits as f64 / n)
        })
        .collect();
    Ok(RankingScores {
        p_at_1,
        map,
        recall_at_k,
        n_mentions: preds.len(),
        gold_absent: ranks.iter().filter(|r| r.is_none()).count(),
    })
}

/// Keeps the mentions whose gold entity is in their candidate set. Every
/// prediction key must have a candidate set.
pub fn normalized_filter(
    preds: &[RankedPrediction],
    candidates: &HashMap<String, HashSet<String>>,
) -> Result<Vec<RankedPrediction>> {
    let mut out = Vec::new();
    for p in preds {
        let set = candidates.get(&p.key).ok_or_else(|| {
            Error::MalformedInput(format!("no candidate set for mention `{}`", p.key))
        })?;
        if set.contains(&p.gold) {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// A linked span inside one document, in token coordinates (inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkedSpan {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
}

impl LinkedSpan {
    pub fn new(doc_id: impl Into<String>, start: usize, end: usize, entity_id: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            start,
            end,
            entity_id: entity_id.into(),
        }
    }

    fn overlaps(&self, other: &LinkedSpan) -> bool {
        self.doc_id == other.doc_id && self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Strict,
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_ratios(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Rejects documents whose gold spans overlap.
pub fn check_gold_spans(gold: &[LinkedSpan]) -> Result<()> {
    let mut by_doc: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for g in gold {
        by_doc.entry(&g.doc_id).or_default().push((g.start, g.end));
    }
    for (doc, mut spans) in by_doc {
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[1].0 <= w[0].1) {
            return Err(Error::OverlappingGold {
                doc_id: doc.to_string(),
            });
        }
    }
    Ok(())
}

/// Micro-averaged precision, recall and F1 over all documents.
///
/// Strict mode counts one-to-one exact matches of span and entity. Partial
/// mode counts a prediction as correct when it overlaps a gold span with the
/// same entity, and a gold as found when at least one such prediction exists.
pub fn micro_prf(pred: &[LinkedSpan], gold: &[LinkedSpan], mode: MatchMode) -> Result<Prf> {
    check_gold_spans(gold)?;
    let (pred_hits, gold_hits) = match mode {
        MatchMode::Strict => {
            let mut counts: HashMap<&LinkedSpan, usize> = HashMap::new();
            for g in gold {
                *counts.entry(g).or_default() += 1;
            }
            let mut tp = 0;
            for p in pred {
                if let Some(c) = counts.get_mut(p) {
                    if *c > 0 {
                        *c -= 1;
                        tp += 1;
                    }
                }
            }
            (tp, tp)
        }
        MatchMode::Partial => {
            let mut by_doc: HashMap<&str, Vec<&LinkedSpan>> = HashMap::new();
            for g in gold {
                by_doc.entry(&g.doc_id).or_default().push(g);
            }
            let mut found = HashSet::new();
            let mut pred_hits = 0;
            for p in pred {
                let mut hit = false;
                for (k, g) in by_doc.get(p.doc_id.as_str()).into_iter().flatten().enumerate() {
                    if g.entity_id == p.entity_id && g.overlaps(p) {
                        hit = true;
                        found.insert((g.doc_id.as_str(), k));
                    }
                }
                pred_hits += usize::from(hit);
            }
            (pred_hits, found.len())
        }
    };
    Ok(Prf::from_ratios(
        ratio(pred_hits, pred.len()),
        ratio(gold_hits, gold.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rp(ranked: &[&str], gold: &str) -> RankedPrediction {
        RankedPrediction {
            key: String::new(),
            ranked: ranked.iter().map(|s| s.to_string()).collect(),
            gold: gold.into(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let s = ranking_metrics(&[rp(&["a", "b"], "a"), rp(&["c"], "c")], &[1, 10]).unwrap();
        assert_eq!((s.p_at_1, s.map), (1.0, 1.0));
        assert_eq!(s.recall_at_k[&10], 1.0);
    }

    #[test]
    fn ranks_one_and_four() {
        let s = ranking_metrics(
            &[rp(&["g", "x"], "g"), rp(&["a", "b", "c", "g"], "g")],
            &[3],
        )
        .unwrap();
        assert_eq!(s.p_at_1, 0.5);
        assert_eq!(s.map, 0.625);
        assert_eq!(s.recall_at_k[&3], 0.5);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(ranking_metrics(&[], &[1]), Err(Error::EmptyPredictions)));
    }

    #[test]
    fn normalized_subset() {
        let preds: Vec<_> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(k, g)| RankedPrediction {
                key: k.to_string(),
                ranked: vec![g.to_string()],
                gold: g.to_string(),
            })
            .collect();
        let mut cands = HashMap::new();
        cands.insert("0".to_string(), HashSet::from(["a".to_string()]));
        cands.insert("1".to_string(), HashSet::from(["x".to_string()]));
        cands.insert("2".to_string(), HashSet::from(["c".to_string(), "y".to_string()]));
        let kept = normalized_filter(&preds, &cands).unwrap();
        assert_eq!(kept.len(), 2);
        cands.remove("2");
        assert!(normalized_filter(&preds, &cands).is_err());
    }

    #[test]
    fn shifted_span_partial_only() {
        let pred = [LinkedSpan::new("d", 2, 4, "E1")];
        let gold = [LinkedSpan::new("d", 3, 5, "E1")];
        let partial = micro_prf(&pred, &gold, MatchMode::Partial).unwrap();
        let strict = micro_prf(&pred, &gold, MatchMode::Strict).unwrap();
        assert_eq!((partial.precision, partial.recall, partial.f1), (1.0, 1.0, 1.0));
        assert_eq!((strict.precision, strict.recall, strict.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn no_predictions() {
        let gold = [LinkedSpan::new("d", 0, 0, "E")];
        let s = micro_prf(&[], &gold, MatchMode::Strict).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn overlapping_gold_rejected() {
        let gold = [LinkedSpan::new("d", 0, 2, "E"), LinkedSpan::new("d", 2, 3, "F")];
        assert!(matches!(
            micro_prf(&[], &gold, MatchMode::Partial),
            Err(Error::OverlappingGold { .. })
        ));
        // same offsets in different documents are fine
        let gold = [LinkedSpan::new("a", 0, 2, "E"), LinkedSpan::new("b", 1, 3, "F")];
        assert!(micro_prf(&[], &gold, MatchMode::Partial).is_ok());
    }

    fn random_spans(rng: &mut ChaCha8Rng, non_overlapping: bool) -> Vec<LinkedSpan> {
        let mut out = Vec::new();
        for d in 0..rng.random_range(1..=3) {
            let mut pos = 0;
            for _ in 0..rng.random_range(0..=3) {
                let start = if non_overlapping {
                    pos + rng.random_range(0..3)
                } else {
                    rng.random_range(0..8)
                };
                let end = start + rng.random_range(0..3);
                pos = end + 1;
                out.push(LinkedSpan::new(
                    format!("d{d}"),
                    start,
                    end,
                    format!("E{}", rng.random_range(0..3)),
                ));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn strict_never_beats_partial(seed in 0u64..5000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gold = random_spans(&mut rng, true);
            let pred = random_spans(&mut rng, false);
            let s = micro_prf(&pred, &gold, MatchMode::Strict).unwrap();
            let p = micro_prf(&pred, &gold, MatchMode::Partial).unwrap();
            prop_assert!(s.f1 <= p.f1 + 1e-12);
            for x in [s, p] {
                let h = if x.precision + x.recall > 0.0 {
                    2.0 * x.precision * x.recall / (x.precision + x.recall)
                } else { 0.0 };
                prop_assert!((x.f1 - h).abs() < 1e-9);
            }
        }

        #[test]
        fn ranking_bounds(ranks in proptest::collection::vec(proptest::option::of(1usize..20), 1..30)) {
            let preds: Vec<RankedPrediction> = ranks
                .iter()
                .map(|r| {
                    let mut list: Vec<String> = (0..20).map(|k| format!("x{k}")).collect();
                    if let Some(r) = r {
                        list[r - 1] = "g".into();
                    }
                    RankedPrediction { key: String::new(), ranked: list, gold: "g".into() }
                })
                .collect();
            let s = ranking_metrics(&preds, &[1, 2, 5, 10, 20]).unwrap();
            prop_assert!(s.map >= s.p_at_1);
            let mut last = 0.0;
            for &v in s.recall_at_k.values() {
                prop_assert!(v >= last);
                prop_assert!(s.p_at_1 <= v);
                last = v;
            }
        }
    }
}
