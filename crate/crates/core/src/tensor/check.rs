use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Largest relative disagreement between the tape gradient of a scalar
/// function and its central finite differences.
///
/// `f` records its computation on the given tape starting from the leaf
/// holding `x`. The relative error of coordinate `i` is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Parameter(format!("grad_check eps {eps} outside (0, 1e-2]")));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf(&x.clone().with_grad());
    let out = f(&mut tape, leaf)?;
    let analytic = tape
        .backward(out)?
        .take(leaf)
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |probe: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(probe);
        let out = f(&mut tape, leaf)?;
        Ok(tape.value(out)[0])
    };

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    probe.requires_grad = false;
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
