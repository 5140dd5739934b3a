use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{ScoreInit, TrainConfig, TrainMode};
use super::eval::{evaluate, recalibrate_batch_norm};
use super::log::{EpochRecord, Stage, TrainLog};
use super::steps::{dense_step, dropped_flags, finetune_step, hard_zero, optimizer_for, warmup_step, wstar_norm};
use crate::error::{Error, Result};
use crate::net::{NetConfig, StepStats, StgcnNetwork};
use crate::optim::{CosineSchedule, Sgd};
use crate::rng::{derive_indexed, derive_seed, rng_from};
use crate::skeleton::Dataset;
use crate::sparsity::{lth_step, random_mask, MaskScores, MaskSet};

/// Train-mode sweeps used to refresh batch-norm statistics in mask learning.
pub const RECALIBRATION_SWEEPS: usize = 2;

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: StgcnNetwork,
    /// Mask of the final network (absent in dense mode).
    pub mask: Option<MaskSet>,
    pub log: TrainLog,
    /// Network at the end of warm-up, before masked weights were zeroed.
    pub warmup_net: Option<StgcnNetwork>,
    /// Norm of the masked-out weights before the first update.
    pub initial_wstar_norm: Option<f64>,
}

/// Network initialised from the `init` sub-seed of `seed`.
pub fn init_network(config: &NetConfig, seed: u64) -> Result<StgcnNetwork> {
    StgcnNetwork::new(config, derive_seed(seed, "init"))
}

/// Trains `net` on `train` according to `config`.
pub fn train(net: StgcnNetwork, train: &Dataset, test: Option<&Dataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(net, train, test, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    mut net: StgcnNetwork,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(&net, train)?;
    if let Some(t) = test {
        check_data(&net, t)?;
    }
    let registry = net.registry();
    let mask_seed = derive_seed(config.seed, "mask");
    let schedule = CosineSchedule::new(config.lr, config.epochs);
    let mut opt = optimizer_for(&net, config.momentum, config.weight_decay);

    let mut mask = match config.mode {
        TrainMode::Generator => Some(random_mask(&registry, config.sparsity, mask_seed)?),
        _ => None,
    };
    let dropped = mask.as_ref().map(dropped_flags).unwrap_or_default();
    let initial_wstar_norm = mask.as_ref().map(|m| wstar_norm(&net, m)).transpose()?;

    let mut lth = if config.mode == TrainMode::Lth {
        net.set_requires_grad(false);
        let scores = match config.score_init {
            ScoreInit::Magnitude => MaskScores::magnitude(&net),
            ScoreInit::Uniform => MaskScores::uniform(&net, mask_seed),
        };
        let score_opt = Sgd::for_tensors(config.momentum, config.weight_decay, scores.tensors());
        mask = Some(scores.binarize(&net, config.sparsity)?);
        Some((scores, score_opt))
    } else {
        None
    };

    let mut log = TrainLog::default();
    let mut warmup_net = None;
    let start = Instant::now();
    let mut order: Vec<usize> = Vec::with_capacity(train.len());

    for epoch in 0..config.epochs {
        let stage = match config.mode {
            TrainMode::Dense => Stage::Dense,
            TrainMode::Lth => Stage::Lth,
            TrainMode::Generator if epoch < config.warmup_epochs => Stage::Warmup,
            TrainMode::Generator => Stage::Finetune,
        };
        if config.mode == TrainMode::Generator && epoch == config.warmup_epochs {
            let m = mask.as_ref().expect("generator mask");
            if config.warmup_epochs > 0 {
                warmup_net = Some(net.clone());
            }
            hard_zero(&mut net, m, &mut opt)?;
        }

        let lr = schedule.lr(epoch);
        order.clear();
        order.extend(0..train.len());
        order.shuffle(&mut rng_from(derive_indexed(config.seed, "data-order", epoch as u64)));

        let mut totals = StepStats::default();
        let mut penalty_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let (x, labels) = train.batch(chunk)?;
            let stats = match stage {
                Stage::Dense => dense_step(&mut net, &x, &labels, &mut opt, lr)?,
                Stage::Warmup => warmup_step(
                    &mut net,
                    mask.as_ref().expect("generator mask"),
                    &dropped,
                    &x,
                    &labels,
                    config.lambda,
                    &mut opt,
                    lr,
                )?,
                Stage::Finetune => finetune_step(&mut net, mask.as_ref().expect("generator mask"), &x, &labels, &mut opt, lr)?,
                Stage::Lth => {
                    let (scores, score_opt) = lth.as_mut().expect("score state");
                    lth_step(&mut net, scores, &x, &labels, config.sparsity, score_opt, lr)?.1
                }
            };
            totals.class_loss += stats.class_loss * stats.samples as f64;
            totals.correct += stats.correct;
            totals.samples += stats.samples;
            penalty_sum += stats.penalty;
            batches += 1;
        }
        if let Some((scores, _)) = &lth {
            mask = Some(scores.binarize(&net, config.sparsity)?);
        }
        if !totals.class_loss.is_finite() {
            return Err(Error::Invariant(format!("training loss diverged in epoch {epoch}")));
        }

        let last = epoch + 1 == config.epochs;
        let due = config.eval_every > 0 && (epoch + 1) % config.eval_every == 0;
        // the mask moves every step, so the running statistics mix many
        // masks; re-estimate them for the current one before it is judged
        if config.mode == TrainMode::Lth && (last || (due && test.is_some())) {
            recalibrate_batch_norm(&mut net, mask.as_ref(), train, config.batch_size, RECALIBRATION_SWEEPS)?;
        }
        let test_acc = match test {
            Some(t) if due || last => {
                let eval_mask = if stage == Stage::Warmup { None } else { mask.as_ref() };
                Some(evaluate(&net, eval_mask, t)?.accuracy)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            stage,
            class_loss: totals.class_loss / totals.samples as f64,
            penalty: penalty_sum / batches as f64,
            wstar_norm: match (config.mode, &mask) {
                (TrainMode::Generator, Some(m)) => wstar_norm(&net, m)?,
                _ => 0.0,
            },
            train_acc: totals.correct as f64 / totals.samples as f64,
            test_acc,
            seconds: if config.log_timing { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        on_epoch(&record);
        log.records.push(record);
    }

    if config.mode == TrainMode::Lth {
        net.set_requires_grad(true);
    }
    Ok(TrainOutcome {
        net,
        mask,
        log,
        warmup_net,
        initial_wstar_norm,
    })
}

fn check_data(net: &StgcnNetwork, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input(format!("{} split is empty", data.split)));
    }
    if data.dims != net.config().in_channels || data.joints != net.num_joints() {
        return Err(Error::Input(format!(
            "{} split has {} joints x {} coordinates, network expects {} x {}",
            data.split,
            data.joints,
            data.dims,
            net.num_joints(),
            net.config().in_channels
        )));
    }
    if data.num_classes > net.num_classes() {
        return Err(Error::Input(format!(
            "{} split has {} classes, network predicts {}",
            data.split,
            data.num_classes,
            net.num_classes()
        )));
    }
    Ok(())
}
