//! Mention and entity representations, scores, losses, negative mining and
//! the training loop.

mod examples;
mod loss;
mod mining;
mod objective;
mod optim;
mod reps;
mod train;

pub use examples::{build_examples, ContextConfig, Example, MentionTarget};
pub use loss::{ce_loss, ce_loss_grad, joint_loss, mention_detection_loss, weighted_joint_loss};
pub use mining::{mine_candidates, CandidateSet};
pub use objective::{batch_gradients, example_mention_vectors, mention_vector, BatchLoss, Objective};
pub use optim::{linear_decay, AdamState, AdamW};
pub use reps::{
    mention_rep, mention_rep_meanpool, score, sigmoid, span_logit, span_probability, MentionRep,
};
pub use train::{
    evaluate_examples, evaluate_with_index, EpochStats, TrainConfig, TrainLogRecord, Trainer,
};
