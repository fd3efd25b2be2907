//! Ranking and span metrics, evaluation reports, threshold tuning and the
//! throughput harness.

mod bench;
mod metrics;
mod report;
mod tune;

pub use bench::{bench_throughput, throughput_ratio, ThroughputReport};
pub use metrics::{
    check_gold_spans, micro_prf, normalized_filter, ranking_metrics, LinkedSpan, MatchMode, Prf,
    RankedPrediction, RankingScores,
};
pub use report::{evaluate_predictions, mention_key, EvalReport};
pub use tune::{default_gamma_grid, sweep_gamma, GammaSweep};
