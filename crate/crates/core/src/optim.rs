//! SGD with momentum and L2 weight decay, and the cosine learning-rate
//! schedule.

use std::f64::consts::PI;

use crate::tensor::Tensor;

/// `lr(t) = lr0 * (1 + cos(pi * t / total)) / 2`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub total: usize,
}

impl CosineSchedule {
    pub fn new(lr0: f64, total: usize) -> Self {
        CosineSchedule { lr0, total }
    }

    pub fn lr(&self, t: usize) -> f64 {
        if self.total == 0 || t >= self.total {
            return 0.0;
        }
        self.lr0 * (1.0 + (PI * t as f64 / self.total as f64).cos()) / 2.0
    }
}

/// Momentum buffers for a fixed list of tensors.
///
/// `v <- mu * v + (g + wd * w)`, `w <- w - lr * v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64, shapes: &[usize]) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_tensors<'a>(momentum: f64, weight_decay: f64, tensors: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let sizes: Vec<usize> = tensors.into_iter().map(Tensor::numel).collect();
        Sgd::new(momentum, weight_decay, &sizes)
    }

    pub fn velocity(&self, slot: usize) -> &[f64] {
        &self.velocity[slot]
    }

    /// Zeroes the momentum of the entries where `keep` is false.
    pub fn clear_masked(&mut self, slot: usize, keep: &[bool]) {
        for (v, &k) in self.velocity[slot].iter_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
    }

    /// Updates tensor `slot`. Entries with `keep[i] == false` are skipped
    /// entirely: neither the weight nor its momentum moves.
    pub fn step(&mut self, slot: usize, param: &mut Tensor, grad: &[f64], lr: f64, keep: Option<&[bool]>) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        let vel = &mut self.velocity[slot];
        let w = param.data_mut();
        for i in 0..w.len() {
            if let Some(k) = keep {
                if !k[i] {
                    continue;
                }
            }
            let d = grad[i] + wd * w[i];
            vel[i] = mu * vel[i] + d;
            w[i] -= lr * vel[i];
        }
    }
}
