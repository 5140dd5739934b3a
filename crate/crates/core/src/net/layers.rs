use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::tensor::{BatchNormStats, Propagation, Tape, Tensor, Var};

/// Spatial graph convolution `X_t -> (A X_t) theta` for every frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcnLayer {
    /// `[C_in, C_out]`
    pub theta: Tensor,
}

impl SgcnLayer {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let std = (2.0 / c_in as f64).sqrt();
        SgcnLayer {
            theta: normal_tensor(&[c_in, c_out], std, rng),
        }
    }

    pub fn channels(&self) -> (usize, usize) {
        (self.theta.shape()[0], self.theta.shape()[1])
    }
}

/// Depthwise temporal convolution with a centred `2l - 1` tap kernel per
/// channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TgcnLayer {
    /// `[C, 2l - 1]`
    pub omega: Tensor,
    pub half_window: usize,
}

impl TgcnLayer {
    pub fn new<R: Rng + ?Sized>(channels: usize, half_window: usize, rng: &mut R) -> Self {
        let taps = 2 * half_window - 1;
        let std = (2.0 / taps as f64).sqrt();
        TgcnLayer {
            omega: normal_tensor(&[channels, taps], std, rng),
            half_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub stats: BatchNormStats,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[channels], 1.0).with_grad(),
            beta: Tensor::zeros(&[channels]).with_grad(),
            stats: BatchNormStats::new(channels),
        }
    }
}

/// `x -> sgcn -> bn -> relu -> tgcn -> bn (+ x) -> relu`.
#[derive(Clone, Debug, PartialEq)]
pub struct StgcnBlock {
    pub sgcn: SgcnLayer,
    pub bn1: BatchNorm,
    pub tgcn: TgcnLayer,
    pub bn2: BatchNorm,
    pub residual: bool,
}

/// Tape handles of one block's (possibly masked) parameters.
pub(crate) struct BlockVars {
    pub theta: Var,
    pub bn1: (Var, Var),
    pub omega: Var,
    pub bn2: (Var, Var),
}

impl StgcnBlock {
    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, half_window: usize, residual: bool, rng: &mut R) -> Self {
        StgcnBlock {
            sgcn: SgcnLayer::new(c_in, c_out, rng),
            bn1: BatchNorm::new(c_out),
            tgcn: TgcnLayer::new(c_out, half_window, rng),
            bn2: BatchNorm::new(c_out),
            residual: residual && c_in == c_out,
        }
    }

    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        vars: &BlockVars,
        prop: &Arc<Propagation>,
        train: bool,
    ) -> Result<(Var, [Option<BatchNormStats>; 2])> {
        let s = tape.sgcn(x, vars.theta, Arc::clone(prop))?;
        let (s, stats1) = tape.batch_norm(s, vars.bn1.0, vars.bn1.1, &self.bn1.stats, train)?;
        let s = tape.relu(s);
        let t = tape.tgcn(s, vars.omega)?;
        let (mut t, stats2) = tape.batch_norm(t, vars.bn2.0, vars.bn2.1, &self.bn2.stats, train)?;
        if self.residual {
            t = tape.add(t, x)?;
        }
        Ok((tape.relu(t), [stats1, stats2]))
    }
}

pub(crate) fn normal_tensor<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape, data).expect("shape matches").with_grad()
}
