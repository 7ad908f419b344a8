//! Training, sampling, evaluation and the analysis studies.

mod eval;
mod generator;
mod optim;
mod sample;
mod studies;
mod train;

pub use eval::{eval_space, evaluate_w2, evaluate_w2_with, W2_REPLICATES, W2_SUBSAMPLE};
pub use generator::{with_component, Generator};
pub use optim::{ema_update, Adam};
pub use sample::{sample, CondTask, ConditionMask};
pub use studies::{
    attention_study, gw_study, AttentionRow, AttentionStudy, GwStudy, GwStudyConfig, ATTENTION_BUCKETS, GW_NOISE_GRID,
};
pub use train::{train, LossRow, TrainConfig, TrainOutput};
