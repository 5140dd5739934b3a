use std::sync::Arc;

use super::gemm::{gemm, gemm_new};
use super::tape::{axpy, dot, Op, Tape, Var};
use crate::error::{Error, Result};

/// Dense `N x N` propagation matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagation {
    n: usize,
    dense: Vec<f64>,
}

impl Propagation {
    pub fn new(n: usize, dense: Vec<f64>) -> Result<Self> {
        if n == 0 || dense.len() != n * n {
            return Err(Error::dim("propagation", &[n, n], &[dense.len()]));
        }
        Ok(Propagation { n, dense })
    }

    pub fn identity(n: usize) -> Self {
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = 1.0;
        }
        Propagation::new(n, dense).expect("square")
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    /// `x A^T` for `x` holding rows of joint values: every row becomes the
    /// propagated row.
    fn propagate_rows(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        gemm_new(x.len() / n, n, n, (x, n, 1), (&self.dense, 1, n))
    }

    /// `g A` row by row, the adjoint of [`Propagation::propagate_rows`].
    fn propagate_rows_adjoint(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        gemm_new(g.len() / n, n, n, (g, n, 1), (&self.dense, n, 1))
    }
}

impl Tape {
    /// Spatial graph convolution on `[B, C_in, T, N]`: for every frame,
    /// joints are aggregated with `prop` and channels mixed by
    /// `theta[C_in, C_out]`.
    pub fn sgcn(&mut self, x: Var, theta: Var, prop: Arc<Propagation>) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let st = self.shape(theta).to_vec();
        if s.len() != 4 || st.len() != 2 || st[0] != s[1] {
            return Err(Error::dim("sgcn", &s, &st));
        }
        if s[3] != prop.size() {
            return Err(Error::dim("sgcn", &s, &[prop.size(), prop.size()]));
        }
        let (b, cin, t, n) = (s[0], s[1], s[2], s[3]);
        let cout = st[1];
        let area = t * n;
        let aggregated = prop.propagate_rows(self.value(x));
        let th = self.value(theta);
        let mut out = Vec::with_capacity(b * cout * area);
        for agg in aggregated.chunks_exact(cin * area) {
            // out_b[cout, area] = theta^T agg_b
            out.extend(gemm_new(cout, cin, area, (th, 1, cout), (agg, area, 1)));
        }
        let ng = self.needs(x) || self.needs(theta);
        Ok(self.push(
            vec![b, cout, t, n],
            out,
            Op::Sgcn {
                x,
                theta,
                prop,
                aggregated,
            },
            ng,
        ))
    }

    /// Depthwise temporal convolution on `[B, C, T, N]` with kernel
    /// `omega[C, 2l-1]` centred on the current frame and zero padding:
    /// `out[t] = sum_{k=-(l-1)}^{l-1} omega[k + l - 1] * x[t + k]`.
    pub fn tgcn(&mut self, x: Var, omega: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let so = self.shape(omega).to_vec();
        if s.len() != 4 || so.len() != 2 || so[0] != s[1] || so[1].is_multiple_of(2) {
            return Err(Error::dim("tgcn", &s, &so));
        }
        let (b, c, t, n) = (s[0], s[1], s[2], s[3]);
        let taps = so[1];
        let (xv, w) = (self.value(x), self.value(omega));
        let out = depthwise(xv, w, (b, c, t, n), taps, false);
        let ng = self.needs(x) || self.needs(omega);
        Ok(self.push(s, out, Op::Tgcn { x, omega }, ng))
    }
}

/// Depthwise temporal correlation of `[B, C, T, N]` data with per-channel
/// kernels `w[C, taps]`; `adjoint` applies the transposed operator (the
/// kernel mirrored), which is the input gradient.
fn depthwise(x: &[f64], w: &[f64], (b, c, t, n): (usize, usize, usize, usize), taps: usize, adjoint: bool) -> Vec<f64> {
    let half = (taps / 2) as isize;
    let area = t * n;
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * area;
            let src = &x[off..off + area];
            let kernel = &w[ch * taps..(ch + 1) * taps];
            let start = out.len();
            // the centre tap covers the whole slab and initialises it
            out.extend(src.iter().map(|v| kernel[taps / 2] * v));
            let dst = &mut out[start..];
            for (j, &wj) in kernel.iter().enumerate() {
                let k = j as isize - half;
                if k == 0 {
                    continue;
                }
                let k = if adjoint { -k } else { k };
                if let Some((o, i, len)) = tap_span(k, t, n) {
                    axpy(&mut dst[o..o + len], wj, &src[i..i + len]);
                }
            }
        }
    }
    out
}

/// For temporal offset `k`, the (output start, input start, length) of the
/// overlapping span in a flattened `T x N` slab.
fn tap_span(k: isize, t: usize, n: usize) -> Option<(usize, usize, usize)> {
    let shift = k.unsigned_abs();
    if shift >= t {
        return None;
    }
    let len = (t - shift) * n;
    Some(if k >= 0 { (0, shift * n, len) } else { (shift * n, 0, len) })
}

pub(super) fn sgcn_backward(
    tape: &Tape,
    x: Var,
    theta: Var,
    prop: &Propagation,
    aggregated: &[f64],
    g: &[f64],
    grads: &mut [Option<Vec<f64>>],
) {
    let s = tape.shape(x);
    let (b, cin, t, n) = (s[0], s[1], s[2], s[3]);
    let cout = tape.shape(theta)[1];
    let area = t * n;
    let th = tape.value(theta);

    tape.accumulate(grads, theta, |gt| {
        for (agg, gb) in aggregated.chunks_exact(cin * area).zip(g.chunks_exact(cout * area)) {
            // d theta += agg_b g_b^T
            gemm(cin, area, cout, 1.0, (agg, area, 1), (gb, 1, area), 1.0, gt);
        }
    });

    if tape.needs(x) {
        let mut dagg = Vec::with_capacity(b * cin * area);
        for gb in g.chunks_exact(cout * area) {
            dagg.extend(gemm_new(cin, cout, area, (th, cout, 1), (gb, area, 1)));
        }
        tape.contribute(grads, x, prop.propagate_rows_adjoint(&dagg));
    }
}

pub(super) fn tgcn_backward(tape: &Tape, x: Var, omega: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let s = tape.shape(x);
    let (b, c, t, n) = (s[0], s[1], s[2], s[3]);
    let taps = tape.shape(omega)[1];
    let half = (taps / 2) as isize;
    let area = t * n;
    let (xv, w) = (tape.value(x), tape.value(omega));

    tape.accumulate(grads, omega, |gw| {
        for bi in 0..b {
            for ch in 0..c {
                let off = (bi * c + ch) * area;
                for j in 0..taps {
                    if let Some((o, i, len)) = tap_span(j as isize - half, t, n) {
                        gw[ch * taps + j] += dot(&g[off + o..off + o + len], &xv[off + i..off + i + len]);
                    }
                }
            }
        }
    });
    if tape.needs(x) {
        tape.contribute(grads, x, depthwise(g, w, (b, c, t, n), taps, true));
    }
}
