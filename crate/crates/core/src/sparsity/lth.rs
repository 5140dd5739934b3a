use rand::Rng;

use super::mask::{binarize, MaskSet};
use crate::error::{Error, Result};
use crate::net::{count_correct, Mode, StepStats, StgcnNetwork, WeightView};
use crate::optim::Sgd;
use crate::rng::rng_from;
use crate::tensor::Tensor;

/// Real-valued scores `m = (m_s, m_t)`, one tensor per maskable group.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskScores {
    tensors: Vec<Tensor>,
}

impl MaskScores {
    pub fn new(net: &StgcnNetwork, tensors: Vec<Tensor>) -> Result<Self> {
        let registry = net.registry();
        let groups: Vec<_> = registry.maskable().map(|(_, e)| e).collect();
        if tensors.len() != groups.len() {
            return Err(Error::Mask(format!(
                "{} score tensors for {} maskable groups",
                tensors.len(),
                groups.len()
            )));
        }
        for (t, e) in tensors.iter().zip(&groups) {
            if t.shape() != e.shape.as_slice() {
                return Err(Error::dim("mask scores", t.shape(), &e.shape));
            }
        }
        Ok(MaskScores {
            tensors: tensors.into_iter().map(Tensor::with_grad).collect(),
        })
    }

    /// Scores initialised to the magnitude of the current weights.
    pub fn magnitude(net: &StgcnNetwork) -> Self {
        let registry = net.registry();
        let params = net.params();
        let tensors = registry
            .maskable()
            .map(|(i, e)| {
                let data = params[i].data().iter().map(|w| w.abs()).collect();
                Tensor::new(&e.shape, data).expect("registry shape").with_grad()
            })
            .collect();
        MaskScores { tensors }
    }

    /// Scores drawn i.i.d. from `U[0, 1)`.
    pub fn uniform(net: &StgcnNetwork, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let tensors = net
            .registry()
            .maskable()
            .map(|(_, e)| {
                let data = (0..e.numel()).map(|_| rng.random::<f64>()).collect();
                Tensor::new(&e.shape, data).expect("registry shape").with_grad()
            })
            .collect();
        MaskScores { tensors }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn binarize(&self, net: &StgcnNetwork, sparsity: f64) -> Result<MaskSet> {
        binarize(&net.registry(), &self.tensors, sparsity)
    }
}

/// One score update over frozen weights.
///
/// The mask is re-binarized from the current scores, the forward pass uses
/// `S(m) ⊙ W0`, and the scores receive the straight-through gradient. Only
/// the scores move; batch-norm running statistics are refreshed as in any
/// train-mode pass. Returns the mask used for this step.
pub fn lth_step(
    net: &mut StgcnNetwork,
    scores: &mut MaskScores,
    input: &Tensor,
    labels: &[usize],
    sparsity: f64,
    opt: &mut Sgd,
    lr: f64,
) -> Result<(MaskSet, StepStats)> {
    let registry = net.registry();
    if let Some((i, _)) = net.params().iter().enumerate().find(|(_, p)| p.requires_grad) {
        return Err(Error::Invariant(format!(
            "mask learning needs frozen weights, but {} requires grad",
            registry.entries()[i].name
        )));
    }
    let mask = scores.binarize(net, sparsity)?;
    let pass = net.forward(
        input,
        Mode::Train,
        WeightView::Scored {
            scores: &scores.tensors,
            mask: &mask,
        },
    )?;
    let mut tape = pass.tape;
    let logits = tape.tensor(pass.logits);
    let loss = tape.softmax_cross_entropy(pass.logits, labels)?;
    let class_loss = tape.value(loss)[0];
    let mut grads = tape.backward(loss)?;
    for (slot, (t, v)) in scores.tensors.iter_mut().zip(&pass.scores).enumerate() {
        let g = grads
            .take(*v)
            .ok_or_else(|| Error::Graph("score leaf received no gradient".into()))?;
        opt.step(slot, t, &g, lr, None);
    }
    Ok((
        mask,
        StepStats {
            class_loss,
            penalty: 0.0,
            correct: count_correct(&logits, labels),
            samples: labels.len(),
        },
    ))
}
