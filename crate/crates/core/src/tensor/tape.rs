use std::sync::Arc;

use super::graph_conv::{self, Propagation};
use super::nn;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(super) usize);

pub(super) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Select(Var, Arc<[bool]>),
    StraightThrough {
        weights: Var,
        scores: Var,
        keep: Arc<[bool]>,
    },
    Sum(Var),
    L2Norm(Var),
    AddRowBias(Var, Var),
    MeanPool(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    Sgcn {
        x: Var,
        theta: Var,
        prop: Arc<Propagation>,
        aggregated: Vec<f64>,
    },
    Tgcn {
        x: Var,
        omega: Var,
    },
}

pub(super) struct Node {
    pub(super) shape: Vec<usize>,
    pub(super) value: Vec<f64>,
    pub(super) needs_grad: bool,
    pub(super) is_param: bool,
    pub(super) op: Op,
}

/// Record of executed operations for one forward pass.
///
/// Confined to one thread; independent tapes may run concurrently.
#[derive(Default)]
pub struct Tape {
    pub(super) nodes: Vec<Node>,
}

/// Gradients of the `requires_grad` leaves of a consumed tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(super) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            needs_grad,
            is_param: false,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf holding a copy of `t`. Its gradient is reported iff
    /// `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let var = self.push(t.shape.clone(), t.data.clone(), Op::Leaf, t.requires_grad);
        self.nodes[var.0].is_param = t.requires_grad;
        var
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t.shape, t.data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.value.clone(),
            requires_grad: false,
            grad: None,
        }
    }

    pub(super) fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        Ok(self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        let ng = self.needs(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x + s).collect();
        let ng = self.needs(a);
        self.push(self.shape(a).to_vec(), out, Op::AddScalar(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let ng = self.needs(a);
        self.push(self.shape(a).to_vec(), out, Op::Relu(a), ng)
    }

    /// Keeps entries where `keep` is set and writes an exact `+0.0` elsewhere.
    /// The gradient is routed to kept entries only.
    pub fn select(&mut self, a: Var, keep: Arc<[bool]>) -> Result<Var> {
        if keep.len() != self.value(a).len() {
            return Err(Error::dim("select", self.shape(a), &[keep.len()]));
        }
        let out = self
            .value(a)
            .iter()
            .zip(keep.iter())
            .map(|(&x, &k)| if k { x } else { 0.0 })
            .collect();
        let ng = self.needs(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Select(a, keep), ng))
    }

    /// Masked weights whose mask came from binarizing `scores`.
    ///
    /// The forward pass is `select(weights, keep)`. The backward pass treats
    /// the binarization as the identity, so `scores` receive
    /// `upstream * weights` for every entry, kept or not.
    pub fn straight_through(&mut self, weights: Var, scores: Var, keep: Arc<[bool]>) -> Result<Var> {
        if self.shape(weights) != self.shape(scores) {
            return Err(Error::dim("straight_through", self.shape(weights), self.shape(scores)));
        }
        if keep.len() != self.value(weights).len() {
            return Err(Error::dim("straight_through", self.shape(weights), &[keep.len()]));
        }
        let out = self
            .value(weights)
            .iter()
            .zip(keep.iter())
            .map(|(&x, &k)| if k { x } else { 0.0 })
            .collect();
        let ng = self.needs(weights) || self.needs(scores);
        Ok(self.push(
            self.shape(weights).to_vec(),
            out,
            Op::StraightThrough { weights, scores, keep },
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let ng = self.needs(a);
        self.push(vec![1], vec![s], Op::Sum(a), ng)
    }

    /// Euclidean norm of all entries.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        let ng = self.needs(a);
        self.push(vec![1], vec![s], Op::L2Norm(a), ng)
    }

    /// `x[B, K] + bias[K]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::dim("add_row_bias", sx, sb));
        }
        let k = sx[1];
        let b = self.value(bias);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % k])
            .collect();
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(sx.to_vec(), out, Op::AddRowBias(x, bias), ng))
    }

    /// Runs the reverse pass from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(node, &g, &mut grads);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if !node.is_param {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs(*a) {
                    let bv = self.value(*b);
                    self.accumulate(grads, *a, |ga| {
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                ga[i * k + p] += s;
                            }
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.value(*a);
                    self.accumulate(grads, *b, |gb| {
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                for j in 0..n {
                                    gb[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.contribute(grads, *a, g.to_vec());
                }
                if self.needs(*b) {
                    self.contribute(grads, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| axpy(ga, 1.0, g));
                self.accumulate(grads, *b, |gb| axpy(gb, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |ga| {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gi * y;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((d, gi), x) in gb.iter_mut().zip(g).zip(av) {
                        *d += gi * x;
                    }
                });
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, |ga| axpy(ga, *s, g)),
            Op::AddScalar(a) => self.accumulate(grads, *a, |ga| axpy(ga, 1.0, g)),
            Op::Relu(a) => {
                if self.needs(*a) {
                    let av = self.value(*a);
                    let c = g.iter().zip(av).map(|(&gi, &x)| if x > 0.0 { gi } else { 0.0 }).collect();
                    self.contribute(grads, *a, c);
                }
            }
            Op::Select(a, keep) => self.accumulate(grads, *a, |ga| {
                for ((d, gi), k) in ga.iter_mut().zip(g).zip(keep.iter()) {
                    if *k {
                        *d += gi;
                    }
                }
            }),
            Op::StraightThrough { weights, scores, keep } => {
                self.accumulate(grads, *weights, |gw| {
                    for ((d, gi), k) in gw.iter_mut().zip(g).zip(keep.iter()) {
                        if *k {
                            *d += gi;
                        }
                    }
                });
                let wv = self.value(*weights);
                self.accumulate(grads, *scores, |gs| {
                    for ((d, gi), w) in gs.iter_mut().zip(g).zip(wv) {
                        *d += gi * w;
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::L2Norm(a) => {
                let norm = node.value[0];
                if norm > 0.0 {
                    let av = self.value(*a);
                    self.accumulate(grads, *a, |ga| axpy(ga, g[0] / norm, av));
                } else {
                    self.accumulate(grads, *a, |_| {});
                }
            }
            Op::AddRowBias(x, bias) => {
                self.accumulate(grads, *x, |gx| axpy(gx, 1.0, g));
                let k = self.shape(*bias)[0];
                self.accumulate(grads, *bias, |gb| {
                    for (i, gi) in g.iter().enumerate() {
                        gb[i % k] += gi;
                    }
                });
            }
            Op::MeanPool(x) => nn::mean_pool_backward(self, *x, g, grads),
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                nn::softmax_ce_backward(self, *logits, labels, probs, g[0], grads)
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => nn::batch_norm_backward(self, (*x, *gamma, *beta), xhat, inv_std, *train, g, grads),
            Op::Sgcn {
                x,
                theta,
                prop,
                aggregated,
            } => graph_conv::sgcn_backward(self, *x, *theta, prop, aggregated, g, grads),
            Op::Tgcn { x, omega } => graph_conv::tgcn_backward(self, *x, *omega, g, grads),
        }
    }

    /// Adds an owned contribution into the gradient slot of `v`, moving it in
    /// when the slot is still empty.
    pub(super) fn contribute(&self, grads: &mut [Option<Vec<f64>>], v: Var, c: Vec<f64>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => axpy(acc, 1.0, &c),
            slot => *slot = Some(c),
        }
    }

    /// Adds a contribution into the gradient slot of `v` if it needs one.
    pub(super) fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        f(slot);
    }
}

pub(super) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Inner product accumulated in eight interleaved partial sums, so the
/// result depends only on the inputs and their length.
pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    lane_total(acc) + tail
}

/// Sum of a slice, accumulated like [`dot`].
pub(super) fn lane_sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let chunks = a.chunks_exact(8);
    let rest = chunks.remainder();
    for x in chunks {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    lane_total(acc) + rest.iter().sum::<f64>()
}

fn lane_total(acc: [f64; 8]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(row, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
    out
}
