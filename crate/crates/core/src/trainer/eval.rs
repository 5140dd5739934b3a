use crate::error::{Error, Result};
use crate::net::{argmax_rows, Mode, StgcnNetwork, WeightView};
use crate::skeleton::Dataset;
use crate::sparsity::MaskSet;
use crate::tensor::Tensor;

/// Batch size used for inference. Eval-mode outputs do not depend on it.
pub const EVAL_BATCH: usize = 64;

/// Top-1 accuracy plus the per-sample maximum softmax probability.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    pub correct: usize,
    pub max_probs: Vec<f64>,
    pub predictions: Vec<usize>,
}

/// Row-wise softmax of a `[B, K]` tensor.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let k = logits.shape()[1];
    let mut data = logits.data().to_vec();
    for row in data.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Tensor::new(logits.shape(), data).expect("same shape")
}

/// Eval-mode class probabilities `[n, num_classes]` for the whole dataset.
pub fn predict_proba(net: &StgcnNetwork, mask: Option<&MaskSet>, data: &Dataset) -> Result<Tensor> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate an empty dataset".into()));
    }
    if data.num_classes > net.num_classes() {
        return Err(Error::Input(format!(
            "dataset has {} classes, network predicts {}",
            data.num_classes,
            net.num_classes()
        )));
    }
    let view = match mask {
        Some(m) => WeightView::Masked(m),
        None => WeightView::Dense,
    };
    let k = net.num_classes();
    let mut out = Vec::with_capacity(data.len() * k);
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, _) = data.batch(chunk)?;
        let logits = net.infer(&x, view)?;
        out.extend_from_slice(softmax_rows(&logits).data());
    }
    Tensor::new(&[data.len(), k], out)
}

/// Re-estimates batch-norm running statistics for the network as seen through
/// `mask`, using `sweeps` passes of train-mode forwards over `data` in index
/// order. Parameters are untouched.
pub fn recalibrate_batch_norm(
    net: &mut StgcnNetwork,
    mask: Option<&MaskSet>,
    data: &Dataset,
    batch_size: usize,
    sweeps: usize,
) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    let view = match mask {
        Some(m) => WeightView::Masked(m),
        None => WeightView::Dense,
    };
    let indices: Vec<usize> = (0..data.len()).collect();
    for _ in 0..sweeps {
        for chunk in indices.chunks(batch_size) {
            let (x, _) = data.batch(chunk)?;
            net.forward(&x, Mode::Train, view)?;
        }
    }
    Ok(())
}

/// Accuracy and confidence summary of class probabilities against labels.
pub fn score_probabilities(probs: &Tensor, labels: &[usize]) -> EvalResult {
    let k = probs.shape()[1];
    let predictions = argmax_rows(probs);
    let max_probs: Vec<f64> = probs.data().chunks(k).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    EvalResult {
        accuracy: correct as f64 / labels.len() as f64,
        correct,
        max_probs,
        predictions,
    }
}

/// Top-1 accuracy and max-probabilities of `net` (optionally masked) on `data`.
pub fn evaluate(net: &StgcnNetwork, mask: Option<&MaskSet>, data: &Dataset) -> Result<EvalResult> {
    let probs = predict_proba(net, mask, data)?;
    Ok(score_probabilities(&probs, &data.labels()))
}
