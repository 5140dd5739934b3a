use super::tape::{dot, lane_sum, Op, Tape, Var};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running per-channel statistics used by batch norm in eval mode.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

impl Tape {
    /// Mean over the last two axes: `[B, C, T, N] -> [B, C]`.
    pub fn mean_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(Error::dim("mean_pool", s, &[0, 0, 0, 0]));
        }
        let (b, c, area) = (s[0], s[1], s[2] * s[3]);
        let out = self
            .value(x)
            .chunks_exact(area)
            .map(|slab| slab.iter().sum::<f64>() / area as f64)
            .collect();
        let ng = self.needs(x);
        Ok(self.push(vec![b, c], out, Op::MeanPool(x), ng))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::dim("softmax_cross_entropy", s, &[labels.len()]));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index(format!("label {bad} out of range for {c} classes")));
        }
        let z = self.value(logits);
        let mut probs = vec![0.0; b * c];
        let mut total = 0.0;
        for (row, (&y, p)) in z.chunks_exact(c).zip(labels.iter().zip(probs.chunks_exact_mut(c))) {
            let (arg, m) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            let mut tail = 0.0;
            for (i, &v) in row.iter().enumerate() {
                let e = (v - m).exp();
                p[i] = e;
                if i != arg {
                    tail += e;
                }
            }
            let denom = 1.0 + tail;
            p.iter_mut().for_each(|v| *v /= denom);
            // log-sum-exp split so that a confident correct row keeps precision
            total += (m - row[y]) + tail.ln_1p();
        }
        let ng = self.needs(logits);
        Ok(self.push(
            vec![1],
            vec![total / b as f64],
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Per-channel batch normalization over `[B, C, ...]`.
    ///
    /// In train mode the batch statistics normalize the input and the
    /// running statistics folded with momentum [`BN_MOMENTUM`] are returned
    /// alongside the output; in eval mode `stats` is used as-is.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &BatchNormStats,
        train: bool,
    ) -> Result<(Var, Option<BatchNormStats>)> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(Error::dim("batch_norm", &s, &[0, 0]));
        }
        let (b, c) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || stats.mean.len() != c {
            return Err(Error::dim("batch_norm", &s, self.shape(gamma)));
        }
        let n = b * inner;
        if train && n == 0 {
            return Err(Error::Input("batch norm on an empty batch".into()));
        }
        let xv = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut inv_std = vec![0.0; c];
        let mut mean = vec![0.0; c];
        let mut updated = None;
        if train {
            let mut next = stats.clone();
            for ch in 0..c {
                let mut sum = 0.0;
                for bi in 0..b {
                    let off = (bi * c + ch) * inner;
                    sum += lane_sum(&xv[off..off + inner]);
                }
                let mu = sum / n as f64;
                let mut sq = 0.0;
                for bi in 0..b {
                    let off = (bi * c + ch) * inner;
                    sq += centred_square_sum(&xv[off..off + inner], mu);
                }
                let var = sq / n as f64;
                mean[ch] = mu;
                inv_std[ch] = 1.0 / (var + BN_EPS).sqrt();
                let unbiased = if n > 1 { sq / (n - 1) as f64 } else { var };
                next.mean[ch] = (1.0 - BN_MOMENTUM) * stats.mean[ch] + BN_MOMENTUM * mu;
                next.var[ch] = (1.0 - BN_MOMENTUM) * stats.var[ch] + BN_MOMENTUM * unbiased;
            }
            updated = Some(next);
        } else {
            for ch in 0..c {
                mean[ch] = stats.mean[ch];
                inv_std[ch] = 1.0 / (stats.var[ch] + BN_EPS).sqrt();
            }
        }
        let mut xhat = Vec::with_capacity(xv.len());
        let mut out = Vec::with_capacity(xv.len());
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * inner;
                let (mu, is, g, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                let start = xhat.len();
                xhat.extend(xv[off..off + inner].iter().map(|&v| (v - mu) * is));
                out.extend(xhat[start..].iter().map(|&h| g * h + be));
            }
        }
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let y = self.push(
            s,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            },
            ng,
        );
        Ok((y, updated))
    }
}

pub(super) fn mean_pool_backward(tape: &Tape, x: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let s = tape.shape(x);
    let area = s[2] * s[3];
    let scale = 1.0 / area as f64;
    if tape.needs(x) {
        let c = g.iter().flat_map(|gi| std::iter::repeat_n(gi * scale, area)).collect();
        tape.contribute(grads, x, c);
    }
}

pub(super) fn softmax_ce_backward(
    tape: &Tape,
    logits: Var,
    labels: &[usize],
    probs: &[f64],
    upstream: f64,
    grads: &mut [Option<Vec<f64>>],
) {
    let c = tape.shape(logits)[1];
    let scale = upstream / labels.len() as f64;
    tape.accumulate(grads, logits, |gl| {
        for (r, &y) in labels.iter().enumerate() {
            for j in 0..c {
                let onehot = if j == y { 1.0 } else { 0.0 };
                gl[r * c + j] += (probs[r * c + j] - onehot) * scale;
            }
        }
    });
}

pub(super) fn batch_norm_backward(
    tape: &Tape,
    (x, gamma, beta): (Var, Var, Var),
    xhat: &[f64],
    inv_std: &[f64],
    train: bool,
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let s = tape.shape(x);
    let (b, c) = (s[0], s[1]);
    let inner: usize = s[2..].iter().product();
    let n = (b * inner) as f64;
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * inner;
            sum_g[ch] += lane_sum(&g[off..off + inner]);
            sum_gx[ch] += dot(&g[off..off + inner], &xhat[off..off + inner]);
        }
    }
    tape.accumulate(grads, gamma, |gg| axpy_into(gg, &sum_gx));
    tape.accumulate(grads, beta, |gb| axpy_into(gb, &sum_g));
    let gv = tape.value(gamma);
    if tape.needs(x) {
        let mut gx = Vec::with_capacity(g.len());
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * inner;
                let (gs, hs) = (&g[off..off + inner], &xhat[off..off + inner]);
                let is = inv_std[ch];
                if train {
                    let k = gv[ch] * is / n;
                    let (sg, sgx) = (sum_g[ch], sum_gx[ch]);
                    gx.extend(gs.iter().zip(hs).map(|(&gi, &h)| k * (n * gi - sg - h * sgx)));
                } else {
                    // fixed statistics: plain affine map
                    let k = gv[ch] * is;
                    gx.extend(gs.iter().map(|&gi| k * gi));
                }
            }
        }
        tape.contribute(grads, x, gx);
    }
}

fn centred_square_sum(x: &[f64], mu: f64) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = x.chunks_exact(4);
    let rest = chunks.remainder();
    for v in chunks {
        for l in 0..4 {
            let d = v[l] - mu;
            acc[l] += d * d;
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + rest.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
}

fn axpy_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
