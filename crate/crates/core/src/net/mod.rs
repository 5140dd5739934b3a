//! The ST-GCN network: spatial graph convolution, depthwise temporal
//! convolution, stacked blocks with batch norm, and a pooled linear head.

pub mod checkpoint;
mod layers;
mod network;
mod registry;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use layers::{BatchNorm, SgcnLayer, StgcnBlock, TgcnLayer};
pub use network::{ForwardPass, Mode, StgcnNetwork, WeightView};
pub use registry::{ParamEntry, ParamKind, ParamRegistry};

use crate::skeleton::{AdjacencyMode, HUMAN17_PARENTS};

/// Architecture of an [`StgcnNetwork`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Coordinate dimension of the input.
    pub in_channels: usize,
    /// Output channels of each block; its length is the depth.
    pub channels: Vec<usize>,
    pub num_classes: usize,
    /// Half window `l`; each temporal kernel has `2l - 1` taps.
    pub temporal_half_window: usize,
    /// Identity shortcut on blocks whose input and output widths agree.
    pub residual: bool,
    pub adjacency: AdjacencyMode,
    /// Skeleton parent map (root maps to itself).
    pub parents: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            in_channels: 3,
            channels: vec![32, 32, 64, 64],
            num_classes: 8,
            temporal_half_window: 5,
            residual: true,
            adjacency: AdjacencyMode::Normalized,
            parents: HUMAN17_PARENTS.to_vec(),
        }
    }
}

impl NetConfig {
    /// Ten blocks widening from 64 to 256 channels.
    pub fn ten_layer(num_classes: usize) -> Self {
        NetConfig {
            channels: vec![64, 64, 64, 64, 128, 128, 128, 256, 256, 256],
            num_classes,
            ..NetConfig::default()
        }
    }

    pub fn kernel_taps(&self) -> usize {
        2 * self.temporal_half_window - 1
    }
}

/// Loss and hit count of one optimisation step on a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    /// Mean cross-entropy over the batch.
    pub class_loss: f64,
    /// Regulariser value added to the loss (zero when absent).
    pub penalty: f64,
    pub correct: usize,
    pub samples: usize,
}

/// Row-wise argmax of a `[B, K]` tensor; ties go to the lowest index.
pub fn argmax_rows(logits: &crate::tensor::Tensor) -> Vec<usize> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Number of rows whose argmax equals the label.
pub fn count_correct(logits: &crate::tensor::Tensor, labels: &[usize]) -> usize {
    argmax_rows(logits).iter().zip(labels).filter(|(p, y)| p == y).count()
}
