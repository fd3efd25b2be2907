use std::ops::ControlFlow;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::examples::Example;
use super::mining::{mine_candidates, CandidateSet};
use super::objective::{batch_gradients, example_mention_vectors, BatchLoss, Objective};
use super::optim::{linear_decay, AdamState, AdamW};
use crate::corpus::TokenId;
use crate::encoder::{Checkpoint, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{ranking_metrics, RankedPrediction, RankingScores};
use crate::index::{build_index, EntityIndex, LinkMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub n_random: usize,
    pub n_hard: usize,
    /// Peak rate; decays linearly to zero over `epochs`.
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Mentions per optimizer step (inputs without mentions count as one).
    pub batch_size: usize,
    /// Weight on the detection term of the end-to-end objective.
    pub detection_weight: f64,
    /// Epochs between rebuilds of the entity index used for hard mining.
    pub refresh_every: usize,
    /// Stop once dev P@1 reaches this value.
    pub target_p_at_1: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_random: 10,
            n_hard: 10,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            epochs: 20,
            batch_size: 8,
            detection_weight: 1.0,
            refresh_every: 1,
            target_p_at_1: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_random == 0 && self.n_hard == 0 {
            return bad("train.n_random and train.n_hard cannot both be 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("train.weight_decay must be non-negative");
        }
        if self.epochs == 0 {
            return bad("train.epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be at least 1");
        }
        if !(self.detection_weight >= 0.0 && self.detection_weight.is_finite()) {
            return bad("train.detection_weight must be non-negative");
        }
        if self.refresh_every == 0 {
            return bad("train.refresh_every must be at least 1");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: Option<f64>,
    pub p_at_1: Option<f64>,
    pub map: Option<f64>,
    pub recall_at_10: Option<f64>,
    /// Cumulative training time, evaluation excluded.
    pub wall_seconds: f64,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Groups `order` into batches holding at least `batch_size` mentions.
fn pack_batches(order: &[usize], examples: &[Example], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut weight = 0;
    for &e in order {
        cur.push(e);
        weight += examples[e].mentions.len().max(1);
        if weight >= batch_size {
            out.push(std::mem::take(&mut cur));
            weight = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Ranking metrics of gold mentions in `examples` against a freshly built
/// index. Entity keys are KB rows.
pub fn evaluate_examples(
    params: &ModelParams,
    entity_inputs: &[Vec<TokenId>],
    examples: &[Example],
    objective: &Objective,
    k: usize,
) -> Result<RankingScores> {
    let index = build_index(params, entity_inputs)?;
    evaluate_with_index(params, &index, examples, objective, k)
}

pub fn evaluate_with_index(
    params: &ModelParams,
    index: &EntityIndex,
    examples: &[Example],
    objective: &Objective,
    k: usize,
) -> Result<RankingScores> {
    let per_example: Vec<Vec<RankedPrediction>> = examples
        .par_iter()
        .map(|ex| {
            let vectors = example_mention_vectors(params, ex, objective)?;
            ex.mentions
                .iter()
                .zip(vectors)
                .map(|(m, u)| {
                    let link = index.link(u.view(), k)?;
                    Ok(RankedPrediction {
                        key: String::new(),
                        ranked: link.ranked.iter().map(|(r, _)| r.to_string()).collect(),
                        gold: m.gold.to_string(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let preds: Vec<RankedPrediction> = per_example.into_iter().flatten().collect();
    ranking_metrics(&preds, &[1, 10])
}

/// Summary of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub detection: f64,
    pub disambiguation: f64,
    pub batches: usize,
    pub seconds: f64,
}

/// Deterministic mini-batch trainer. Optimizer steps run sequentially on the
/// calling thread; only forward-only work (index builds, mining vectors) uses
/// the rayon pool, and its results do not depend on the thread count.
pub struct Trainer<'a> {
    pub params: ModelParams,
    pub optimizer: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub objective: Objective,
    entity_inputs: &'a [Vec<TokenId>],
    examples: Vec<Example>,
    mining_index: Option<EntityIndex>,
    adam: AdamW,
}

impl<'a> Trainer<'a> {
    pub fn new(
        params: ModelParams,
        entity_inputs: &'a [Vec<TokenId>],
        examples: Vec<Example>,
        config: TrainConfig,
        mode: LinkMode,
        max_span_len: usize,
    ) -> Result<Self> {
        config.validate()?;
        if entity_inputs.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if examples.iter().all(|e| e.mentions.is_empty()) {
            return Err(Error::NoMentions);
        }
        let optimizer = AdamState::new(&params);
        Ok(Self {
            adam: AdamW {
                weight_decay: config.weight_decay,
                ..Default::default()
            },
            objective: Objective::for_mode(mode, max_span_len, config.detection_weight),
            params,
            optimizer,
            epoch: 0,
            config,
            entity_inputs,
            examples,
            mining_index: None,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(
        checkpoint: Checkpoint,
        entity_inputs: &'a [Vec<TokenId>],
        examples: Vec<Example>,
        config: TrainConfig,
        mode: LinkMode,
        max_span_len: usize,
    ) -> Result<Self> {
        let epoch = checkpoint
            .meta
            .get("epoch")
            .and_then(|e| e.as_u64())
            .ok_or_else(|| Error::Checkpoint("checkpoint has no epoch counter".into()))?
            as usize;
        let optimizer = checkpoint
            .optimizer
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
        let mut t = Self::new(checkpoint.params, entity_inputs, examples, config, mode, max_span_len)?;
        t.optimizer = optimizer;
        t.epoch = epoch;
        if !epoch.is_multiple_of(t.config.refresh_every) && t.config.n_hard > 0 {
            log::warn!("resuming between index refreshes; hard negatives are mined with current parameters");
        }
        Ok(t)
    }

    pub fn checkpoint(&self, vocab_hash: &str, meta: serde_json::Value) -> Checkpoint {
        let mut meta = match meta {
            serde_json::Value::Object(m) => m,
            _ => serde_json::Map::new(),
        };
        meta.insert("epoch".into(), self.epoch.into());
        meta.insert(
            "train".into(),
            serde_json::to_value(&self.config).expect("train config serializes"),
        );
        Checkpoint {
            params: self.params.clone(),
            vocab_hash: vocab_hash.to_string(),
            optimizer: Some(self.optimizer.clone()),
            meta: serde_json::Value::Object(meta),
        }
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Candidate sets for every training mention at the start of `epoch`.
    fn mine(&mut self, epoch: usize) -> Result<Vec<Vec<CandidateSet>>> {
        let m = self.entity_inputs.len();
        let index = if self.config.n_hard > 0 {
            if self.mining_index.is_none() || epoch.is_multiple_of(self.config.refresh_every) {
                self.mining_index = Some(build_index(&self.params, self.entity_inputs)?);
            }
            self.mining_index.clone().expect("index built above")
        } else {
            // random-only mining never scores; only the row count matters
            EntityIndex::from_matrix(Array2::zeros((m, 1)), "")
        };
        let vectors: Vec<Vec<Array1<f64>>> = if self.config.n_hard > 0 {
            self.examples
                .par_iter()
                .map(|ex| example_mention_vectors(&self.params, ex, &self.objective))
                .collect::<Result<_>>()?
        } else {
            self.examples
                .iter()
                .map(|ex| vec![Array1::zeros(1); ex.mentions.len()])
                .collect()
        };
        let mut counter = 0u64;
        let mut out = Vec::with_capacity(self.examples.len());
        for (ex, vecs) in self.examples.iter().zip(&vectors) {
            let mut sets = Vec::with_capacity(ex.mentions.len());
            for (mention, u) in ex.mentions.iter().zip(vecs) {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, epoch as u64, counter));
                counter += 1;
                sets.push(mine_candidates(u.view(), mention.gold, &index, &self.config, &mut rng));
            }
            out.push(sets);
        }
        Ok(out)
    }

    /// Runs one epoch: mining, shuffling, then one AdamW step per batch.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let start = Instant::now();
        let epoch = self.epoch;
        let candidates = self.mine(epoch)?;
        let mut order: Vec<usize> = (0..self.examples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.config.seed, epoch as u64, u64::MAX)));
        let batches = pack_batches(&order, &self.examples, self.config.batch_size);
        let n_batches = batches.len();
        let mut sum = BatchLoss::default();
        for (b, batch) in batches.iter().enumerate() {
            let exs: Vec<Example> = batch.iter().map(|&e| self.examples[e].clone()).collect();
            let sets: Vec<Vec<CandidateSet>> = batch.iter().map(|&e| candidates[e].clone()).collect();
            let (loss, grads) =
                batch_gradients(&self.params, self.entity_inputs, &exs, &sets, &self.objective)?;
            if !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient at epoch {epoch}, batch {b}"
                )));
            }
            let progress = (epoch as f64 + b as f64 / n_batches as f64) / self.config.epochs as f64;
            let lr = linear_decay(self.config.learning_rate, progress);
            self.adam.step(&mut self.params, &grads, &mut self.optimizer, lr);
            sum.total += loss.total;
            sum.detection += loss.detection;
            sum.disambiguation += loss.disambiguation;
        }
        if !self.params.all_finite() {
            return Err(Error::Divergence(format!("non-finite parameters after epoch {epoch}")));
        }
        self.epoch += 1;
        let n = n_batches.max(1) as f64;
        Ok(EpochStats {
            epoch,
            loss: sum.total / n,
            detection: sum.detection / n,
            disambiguation: sum.disambiguation / n,
            batches: n_batches,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `config.epochs` (or the P@1 target) is reached, evaluating
    /// on `dev` after every epoch when it has mentions. `on_epoch` sees every
    /// log record pair and the trainer state; use it to write logs and
    /// checkpoints, and return `Break` to stop early.
    pub fn fit<F>(&mut self, dev: &[Example], mut on_epoch: F) -> Result<Vec<TrainLogRecord>>
    where
        F: FnMut(&[TrainLogRecord], &Trainer<'a>) -> Result<ControlFlow<()>>,
    {
        let mut log = Vec::new();
        let mut wall = 0.0;
        let has_dev = dev.iter().any(|e| !e.mentions.is_empty());
        while !self.is_done() {
            let stats = self.train_epoch()?;
            wall += stats.seconds;
            let mut records = vec![TrainLogRecord {
                epoch: stats.epoch,
                split: "train".into(),
                loss: Some(stats.loss),
                p_at_1: None,
                map: None,
                recall_at_10: None,
                wall_seconds: wall,
            }];
            let mut reached = false;
            if has_dev {
                let dev_ex: Vec<Example> =
                    dev.iter().filter(|e| !e.mentions.is_empty()).cloned().collect();
                let s = evaluate_examples(&self.params, self.entity_inputs, &dev_ex, &self.objective, 10)?;
                reached = self.config.target_p_at_1.is_some_and(|t| s.p_at_1 >= t);
                records.push(TrainLogRecord {
                    epoch: stats.epoch,
                    split: "dev".into(),
                    loss: None,
                    p_at_1: Some(s.p_at_1),
                    map: Some(s.map),
                    recall_at_10: s.recall_at_k.get(&10).copied(),
                    wall_seconds: wall,
                });
            }
            log::info!(
                "epoch {} loss {:.5} ({:.1}s){}",
                stats.epoch,
                stats.loss,
                stats.seconds,
                records
                    .get(1)
                    .and_then(|r| r.p_at_1)
                    .map(|p| format!(" dev P@1 {p:.4}"))
                    .unwrap_or_default()
            );
            let flow = on_epoch(&records, self)?;
            log.extend(records);
            if reached || flow.is_break() {
                break;
            }
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linker::MentionTarget;

    fn ex(mentions: usize) -> Example {
        Example {
            input: vec![2, 3],
            mentions: vec![MentionTarget { start: 1, end: 1, gold: 0 }; mentions],
        }
    }

    #[test]
    fn batches_pack_to_mention_budget() {
        let examples = vec![ex(1), ex(1), ex(8), ex(0), ex(3), ex(5)];
        let order: Vec<usize> = (0..6).collect();
        let b = pack_batches(&order, &examples, 8);
        assert_eq!(b, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(pack_batches(&order, &examples, 1).len(), 6);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let both_zero = TrainConfig {
            n_random: 0,
            n_hard: 0,
            ..Default::default()
        };
        assert!(both_zero.validate().is_err());
    }

    #[test]
    fn seeds_differ_per_mention_and_epoch() {
        assert_ne!(mix(1, 0, 0), mix(1, 0, 1));
        assert_ne!(mix(1, 0, 0), mix(1, 1, 0));
        assert_eq!(mix(5, 2, 3), mix(5, 2, 3));
    }
}
