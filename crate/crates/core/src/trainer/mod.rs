//! Dense training, mask learning over frozen weights, and the two-stage
//! sparse generator (penalised dense warm-up, then masked fine-tuning).

mod config;
mod eval;
mod log;
mod run;
mod steps;

pub use config::{ScoreInit, TrainConfig, TrainMode};
pub use eval::{evaluate, predict_proba, recalibrate_batch_norm, score_probabilities, softmax_rows, EvalResult, EVAL_BATCH};
pub use log::{EpochRecord, Stage, TrainLog};
pub use run::{init_network, train, train_with, TrainOutcome, RECALIBRATION_SWEEPS};
pub use steps::{
    check_masked_zero, dense_step, dropped_flags, finetune_step, group_lasso, group_lasso_on, hard_zero,
    optimizer_for, warmup_step, wstar_norm, wstar_norms,
};
