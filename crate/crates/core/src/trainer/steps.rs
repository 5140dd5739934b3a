use std::sync::Arc;

use crate::error::{Error, Result};
use crate::net::{count_correct, Mode, StepStats, StgcnNetwork, WeightView};
use crate::optim::Sgd;
use crate::sparsity::MaskSet;
use crate::tensor::{Gradients, Tape, Tensor, Var};

/// `sum_i ||W_i ⊙ (1 - M_i)||_2` recorded on `tape`, one group per tensor.
/// `dropped[i]` flags the masked-out entries of `weights[i]`.
pub fn group_lasso_on(tape: &mut Tape, weights: &[Var], dropped: &[Arc<[bool]>]) -> Result<Var> {
    if weights.len() != dropped.len() || weights.is_empty() {
        return Err(Error::Mask(format!(
            "{} weight groups for {} mask groups",
            weights.len(),
            dropped.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&w, d) in weights.iter().zip(dropped) {
        let wstar = tape.select(w, Arc::clone(d))?;
        let norm = tape.l2_norm(wstar);
        total = Some(match total {
            None => norm,
            Some(t) => tape.add(t, norm)?,
        });
    }
    Ok(total.expect("at least one group"))
}

/// Masked-out entries of every maskable group, in registry order.
pub fn dropped_flags(mask: &MaskSet) -> Vec<Arc<[bool]>> {
    (0..mask.entries().len()).map(|g| mask.dropped(g)).collect()
}

/// Value of the group-lasso penalty of `net`'s maskable weights under `mask`.
pub fn group_lasso(net: &StgcnNetwork, mask: &MaskSet) -> Result<f64> {
    Ok(wstar_norms(net, mask)?.iter().sum())
}

/// Per-group norms `||W_i ⊙ (1 - M_i)||_2`.
pub fn wstar_norms(net: &StgcnNetwork, mask: &MaskSet) -> Result<Vec<f64>> {
    let registry = net.registry();
    mask.validate(&registry)?;
    let params = net.params();
    Ok(registry
        .maskable()
        .enumerate()
        .map(|(g, (idx, _))| {
            params[idx]
                .data()
                .iter()
                .zip(mask.keep(g).iter())
                .filter(|(_, &k)| !k)
                .map(|(w, _)| w * w)
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Euclidean norm of all masked-out weights taken together.
pub fn wstar_norm(net: &StgcnNetwork, mask: &MaskSet) -> Result<f64> {
    Ok(wstar_norms(net, mask)?.iter().map(|n| n * n).sum::<f64>().sqrt())
}

/// Builds the optimiser state for every parameter of `net`.
pub fn optimizer_for(net: &StgcnNetwork, momentum: f64, weight_decay: f64) -> Sgd {
    Sgd::for_tensors(momentum, weight_decay, net.params())
}

fn apply_update(
    net: &mut StgcnNetwork,
    params: &[Var],
    grads: &mut Gradients,
    opt: &mut Sgd,
    lr: f64,
    mask: Option<&MaskSet>,
) -> Result<()> {
    let registry = net.registry();
    let mut keeps: Vec<Option<Arc<[bool]>>> = vec![None; registry.len()];
    if let Some(m) = mask {
        for (g, (idx, _)) in registry.maskable().enumerate() {
            keeps[idx] = Some(Arc::clone(m.keep(g)));
        }
    }
    for (slot, (param, var)) in net.params_mut().into_iter().zip(params).enumerate() {
        if !param.requires_grad {
            continue;
        }
        let g = grads.take(*var).ok_or_else(|| {
            Error::Graph(format!("parameter {} received no gradient", registry.entries()[slot].name))
        })?;
        opt.step(slot, param, &g, lr, keeps[slot].as_deref());
    }
    Ok(())
}

/// Forward, loss, backward and one optimiser step. `penalty` adds
/// `lambda * group_lasso` over the given dropped flags.
fn sgd_step(
    net: &mut StgcnNetwork,
    input: &Tensor,
    labels: &[usize],
    opt: &mut Sgd,
    lr: f64,
    view: WeightView<'_>,
    penalty: Option<(f64, &[Arc<[bool]>])>,
) -> Result<StepStats> {
    let mask = match view {
        WeightView::Masked(m) => Some(m),
        _ => None,
    };
    let pass = net.forward(input, Mode::Train, view)?;
    let params = pass.params.clone();
    let mut tape = pass.tape;
    let logits = tape.tensor(pass.logits);
    let ce = tape.softmax_cross_entropy(pass.logits, labels)?;
    let class_loss = tape.value(ce)[0];
    let (loss, penalty_value) = match penalty {
        Some((lambda, dropped)) => {
            let maskable: Vec<Var> = net.registry().maskable().map(|(i, _)| params[i]).collect();
            let lc = group_lasso_on(&mut tape, &maskable, dropped)?;
            let value = tape.value(lc)[0];
            let scaled = tape.scale(lc, lambda);
            (tape.add(ce, scaled)?, value)
        }
        None => (ce, 0.0),
    };
    let mut grads = tape.backward(loss)?;
    apply_update(net, &params, &mut grads, opt, lr, mask)?;
    Ok(StepStats {
        class_loss,
        penalty: penalty_value,
        correct: count_correct(&logits, labels),
        samples: labels.len(),
    })
}

/// One ordinary training step on every parameter.
pub fn dense_step(net: &mut StgcnNetwork, input: &Tensor, labels: &[usize], opt: &mut Sgd, lr: f64) -> Result<StepStats> {
    sgd_step(net, input, labels, opt, lr, WeightView::Dense, None)
}

/// One warm-up step: the forward pass uses the full dense weights, the loss
/// is cross-entropy plus `lambda` times the group lasso over the masked-out
/// weights, and every parameter is updated. With `lambda == 0` the penalty
/// is not recorded at all, so the step equals [`dense_step`].
#[allow(clippy::too_many_arguments)]
pub fn warmup_step(
    net: &mut StgcnNetwork,
    mask: &MaskSet,
    dropped: &[Arc<[bool]>],
    input: &Tensor,
    labels: &[usize],
    lambda: f64,
    opt: &mut Sgd,
    lr: f64,
) -> Result<StepStats> {
    mask.validate(&net.registry())?;
    let penalty = (lambda != 0.0).then_some((lambda, dropped));
    sgd_step(net, input, labels, opt, lr, WeightView::Dense, penalty)
}

/// One fine-tune step on the kept sub-network. Masked entries must already
/// be exactly zero; they and their momentum never move.
pub fn finetune_step(
    net: &mut StgcnNetwork,
    mask: &MaskSet,
    input: &Tensor,
    labels: &[usize],
    opt: &mut Sgd,
    lr: f64,
) -> Result<StepStats> {
    check_masked_zero(net, mask)?;
    sgd_step(net, input, labels, opt, lr, WeightView::Masked(mask), None)
}

/// Fails if any masked-out weight is not exactly zero.
pub fn check_masked_zero(net: &StgcnNetwork, mask: &MaskSet) -> Result<()> {
    let registry = net.registry();
    mask.validate(&registry)?;
    let params = net.params();
    for (g, (idx, e)) in registry.maskable().enumerate() {
        let keep = mask.keep(g);
        if let Some(pos) = params[idx].data().iter().zip(keep.iter()).position(|(&w, &k)| !k && w != 0.0) {
            return Err(Error::Invariant(format!(
                "masked entry {pos} of {} is {}",
                e.name,
                params[idx].data()[pos]
            )));
        }
    }
    Ok(())
}

/// Overwrites masked weights with zero and clears their momentum.
pub fn hard_zero(net: &mut StgcnNetwork, mask: &MaskSet, opt: &mut Sgd) -> Result<()> {
    net.zero_masked(mask)?;
    for (g, (idx, _)) in net.registry().maskable().enumerate() {
        opt.clear_masked(idx, mask.keep(g));
    }
    Ok(())
}
