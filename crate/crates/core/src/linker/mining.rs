use ndarray::ArrayView1;
use rand::Rng;

use super::train::TrainConfig;
use crate::index::{rank_order, EntityIndex};

/// Candidate KB rows for one mention. The gold row is at `gold_position`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub rows: Vec<usize>,
    pub gold_position: usize,
}

impl CandidateSet {
    pub fn gold(&self) -> usize {
        self.rows[self.gold_position]
    }

    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(move |&(k, _)| k != self.gold_position)
            .map(|(_, &r)| r)
    }
}

/// Gold row followed by `n_hard` hard negatives and `n_random` random ones.
///
/// Hard negatives are the highest-scoring non-gold rows under `u . v`, so any
/// row that out-scores the gold comes first; when fewer than `n_hard` rows
/// out-score the gold the remainder is backfilled from the next best.
/// Random negatives are drawn uniformly without replacement from the rows
/// left over. When the KB is too small the set is capped at every row.
pub fn mine_candidates<R: Rng>(
    u: ArrayView1<f64>,
    gold_row: usize,
    index: &EntityIndex,
    cfg: &TrainConfig,
    rng: &mut R,
) -> CandidateSet {
    let m = index.len();
    let available = m.saturating_sub(1);
    let wanted = cfg.n_hard + cfg.n_random;
    if wanted > available {
        log::warn!(
            "knowledge base has {m} entities; capping {wanted} requested negatives at {available}"
        );
    }
    let n_hard = cfg.n_hard.min(available);
    let mut rows = Vec::with_capacity(1 + wanted.min(available));
    rows.push(gold_row);
    if n_hard > 0 {
        let scores = index.scores(u);
        let mut ranked: Vec<(usize, f64)> = scores
            .iter()
            .copied()
            .enumerate()
            .filter(|&(r, _)| r != gold_row)
            .collect();
        if n_hard < ranked.len() {
            ranked.select_nth_unstable_by(n_hard - 1, rank_order);
            ranked.truncate(n_hard);
        }
        ranked.sort_by(rank_order);
        rows.extend(ranked.into_iter().map(|(r, _)| r));
    }
    let n_random = cfg.n_random.min(available - n_hard);
    if n_random > 0 {
        let taken: std::collections::HashSet<usize> = rows.iter().copied().collect();
        let pool: Vec<usize> = (0..m).filter(|r| !taken.contains(r)).collect();
        let picks = rand::seq::index::sample(rng, pool.len(), n_random);
        rows.extend(picks.into_iter().map(|k| pool[k]));
    }
    CandidateSet {
        rows,
        gold_position: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn cfg(n_random: usize, n_hard: usize) -> TrainConfig {
        TrainConfig {
            n_random,
            n_hard,
            ..Default::default()
        }
    }

    /// 1-d index whose scores against u = [1] are the row values.
    fn index(values: &[f64]) -> EntityIndex {
        EntityIndex::from_matrix(
            Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap(),
            "x",
        )
    }

    #[test]
    fn gold_only_kb() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = mine_candidates(array![1.0].view(), 0, &index(&[0.3]), &cfg(10, 10), &mut rng);
        assert_eq!(set.rows, vec![0]);
        assert_eq!(set.gold(), 0);
    }

    #[test]
    fn hard_negatives_outscore_gold() {
        // rows: A=0.9, B=0.8, gold=0.7, C=0.1
        let idx = index(&[0.9, 0.8, 0.7, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = mine_candidates(array![1.0].view(), 2, &idx, &cfg(0, 2), &mut rng);
        assert_eq!(set.rows, vec![2, 0, 1]);
    }

    #[test]
    fn backfill_when_gold_is_best() {
        let idx = index(&[0.2, 0.95, 0.5, 0.6, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = mine_candidates(array![1.0].view(), 1, &idx, &cfg(0, 2), &mut rng);
        // sort oracle over non-gold rows
        let mut others: Vec<(usize, f64)> = vec![(0, 0.2), (2, 0.5), (3, 0.6), (4, 0.1)];
        others.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let expected: Vec<usize> = others.iter().take(2).map(|x| x.0).collect();
        assert_eq!(&set.rows[1..], &expected[..]);
    }

    #[test]
    fn same_seed_same_randoms() {
        let idx = index(&(0..50).map(|v| v as f64).collect::<Vec<_>>());
        let a = mine_candidates(array![1.0].view(), 3, &idx, &cfg(10, 10), &mut ChaCha8Rng::seed_from_u64(4));
        let b = mine_candidates(array![1.0].view(), 3, &idx, &cfg(10, 10), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 21);
    }

    proptest! {
        #[test]
        fn candidate_set_invariants(
            values in proptest::collection::vec(-5.0f64..5.0, 1..60),
            gold_seed in 0usize..1000,
            n_random in 0usize..12,
            n_hard in 0usize..12,
            seed in 0u64..1000,
        ) {
            let m = values.len();
            let gold = gold_seed % m;
            let idx = index(&values);
            let u = Array1::from(vec![1.0]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = mine_candidates(u.view(), gold, &idx, &cfg(n_random, n_hard), &mut rng);
            let unique: HashSet<_> = set.rows.iter().collect();
            prop_assert_eq!(unique.len(), set.rows.len());
            prop_assert_eq!(set.gold(), gold);
            prop_assert!(set.negatives().all(|r| r != gold));
            prop_assert_eq!(set.rows.len(), 1 + (n_random + n_hard).min(m - 1));
            let better = (0..m).filter(|&r| r != gold && values[r] > values[gold]).count();
            let hard = n_hard.min(m - 1);
            if better >= hard {
                for &r in &set.rows[1..1 + hard] {
                    prop_assert!(values[r] > values[gold]);
                }
            }
        }
    }
}
