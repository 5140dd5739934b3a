//! End-to-end acceptance checks. Runs as a plain binary (no libtest
//! harness) and prints one PASS/FAIL line per criterion.
//!
//! The training criteria share one set of runs on the synthetic 8-class
//! task (17 joints, 64 frames, 100 training samples per class), trained
//! once per seed and reused across criteria.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_stgcn::ensemble::{assemble_predict, confidence_report, param_fraction, Aggregation, Member};
use sparse_stgcn::net::{Checkpoint, Mode, NetConfig, StgcnNetwork, WeightView};
use sparse_stgcn::rng::derive_seed;
use sparse_stgcn::skeleton::{synth_dataset, AdjacencyMode, Dataset, Modality, SkeletonGraph, SynthConfig};
use sparse_stgcn::sparsity::{binarize_flat, random_mask, sparsity_report, zero_count, MaskSet};
use sparse_stgcn::tensor::{grad_check, BatchNormStats, Tape, Tensor, Var};
use sparse_stgcn::trainer::{
    evaluate, finetune_step, hard_zero, init_network, optimizer_for, recalibrate_batch_norm, score_probabilities, train,
    Stage, TrainConfig, TrainMode, TrainOutcome, RECALIBRATION_SWEEPS,
};
use sparse_stgcn::Result;

// ---------------------------------------------------------------------------
// shared experiment setup

const SEEDS: [u64; 3] = [0, 1, 2];
const NOISE: f64 = 0.2;
const CHANNELS: [usize; 4] = [24, 24, 32, 32];
const HALF_WINDOW: usize = 3;
const EPOCHS: usize = 40;
const WARMUP: usize = 20;
const LR: f64 = 0.1;
/// Scores start at weight magnitudes, so mask learning takes larger steps.
const SCORE_LR: f64 = 1.0;
const ENSEMBLE_LEVELS: [f64; 4] = [0.6, 0.8, 0.95, 0.99];

fn net_config() -> NetConfig {
    NetConfig {
        channels: CHANNELS.to_vec(),
        temporal_half_window: HALF_WINDOW,
        num_classes: 8,
        ..NetConfig::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Arm {
    mode: TrainMode,
    epochs: usize,
    sparsity: f64,
    warmup: usize,
    lambda: f64,
    lr: f64,
}

impl Arm {
    fn dense() -> Self {
        Arm {
            mode: TrainMode::Dense,
            epochs: EPOCHS,
            sparsity: 0.0,
            warmup: 0,
            lambda: 0.0,
            lr: LR,
        }
    }

    fn generator(sparsity: f64) -> Self {
        Arm {
            mode: TrainMode::Generator,
            epochs: EPOCHS,
            sparsity,
            warmup: WARMUP,
            lambda: 1.0,
            lr: LR,
        }
    }

    fn lth(sparsity: f64) -> Self {
        Arm {
            mode: TrainMode::Lth,
            epochs: EPOCHS,
            sparsity,
            warmup: 0,
            lambda: 0.0,
            lr: SCORE_LR,
        }
    }

    fn key(&self) -> String {
        format!(
            "{}-s{}-e{}-w{}-l{}-lr{}",
            self.mode, self.sparsity, self.epochs, self.warmup, self.lambda, self.lr
        )
    }

    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            epochs: self.epochs,
            warmup_epochs: self.warmup,
            lambda: self.lambda,
            sparsity: self.sparsity,
            seed,
            lr: self.lr,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }
}

struct Lab {
    train: Dataset,
    test: Dataset,
    runs: BTreeMap<String, Vec<TrainOutcome>>,
    started: Instant,
}

impl Lab {
    fn new() -> Self {
        let (train, test) = synth_dataset(&SynthConfig {
            noise_sigma: NOISE,
            ..SynthConfig::default()
        })
        .expect("synthetic data");
        Lab {
            train,
            test,
            runs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    /// Trains `arm` once per seed, caching the outcomes.
    fn runs(&mut self, arm: Arm) -> &[TrainOutcome] {
        let key = arm.key();
        if !self.runs.contains_key(&key) {
            let mut outcomes = Vec::new();
            for &seed in &SEEDS {
                let t0 = Instant::now();
                let net = init_network(&net_config(), seed).expect("network");
                let out = train(net, &self.train, Some(&self.test), &arm.config(seed)).expect("training run");
                eprintln!(
                    "  [{:>6.0}s] {key} seed {seed}: test accuracy {:.4} ({:.0}s)",
                    self.started.elapsed().as_secs_f64(),
                    out.log.final_test_acc().unwrap_or(f64::NAN),
                    t0.elapsed().as_secs_f64()
                );
                outcomes.push(out);
            }
            self.runs.insert(key.clone(), outcomes);
        }
        &self.runs[&key]
    }

    fn accuracies(&mut self, arm: Arm) -> Vec<f64> {
        self.runs(arm)
            .iter()
            .map(|o| o.log.final_test_acc().expect("final evaluation"))
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

/// Outcome of one criterion: pass flag and a one-line summary.
type Verdict = (bool, String);

// ---------------------------------------------------------------------------
// 1. gradient suite

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries bounded away from zero so that ReLU kinks are never crossed.
fn off_kink_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn random_keep(rng: &mut ChaCha8Rng, n: usize) -> Arc<[bool]> {
    (0..n).map(|_| rng.random_bool(0.6)).collect()
}

/// `sum(out * r)` for a fixed random `r`, so every output entry matters.
fn project(t: &mut Tape, out: Var, r: &Tensor) -> Result<Var> {
    let rv = t.constant(r.shape(), r.data().to_vec())?;
    let p = t.mul(out, rv)?;
    Ok(t.sum(p))
}

type Case = Box<dyn Fn(&mut Tape, Var) -> Result<Var>>;

/// One primitive-op case: the probed input and the scalar function of it.
fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<(String, Tensor, Case)> {
    let mut cases: Vec<(String, Tensor, Case)> = Vec::new();
    let prop3 = Arc::new(SkeletonGraph::from_parents(&[0, 0, 1]).unwrap().propagation(AdjacencyMode::Normalized));
    let prop5 = Arc::new(
        SkeletonGraph::from_parents(&[0, 0, 1, 0, 3])
            .unwrap()
            .propagation(AdjacencyMode::Normalized),
    );

    // binary elementwise, each argument in turn
    for name in ["add", "sub", "mul"] {
        for arg in 0..2 {
            let shape = [2 + rng.random_range(0..3), 3];
            let other = random_tensor(rng, &shape);
            let r = random_tensor(rng, &shape);
            let x = random_tensor(rng, &shape);
            let f: Case = Box::new(move |t, v| {
                let o = t.constant(other.shape(), other.data().to_vec())?;
                let (a, b) = if arg == 0 { (v, o) } else { (o, v) };
                let y = match name {
                    "add" => t.add(a, b)?,
                    "sub" => t.sub(a, b)?,
                    _ => t.mul(a, b)?,
                };
                project(t, y, &r)
            });
            cases.push((format!("{name}[{arg}]"), x, f));
        }
    }
    // matmul, each argument
    for arg in 0..2 {
        let (m, k, n) = (2 + rng.random_range(0..3), 2 + rng.random_range(0..3), 2 + rng.random_range(0..3));
        let (xs, os) = if arg == 0 { ([m, k], [k, n]) } else { ([k, n], [m, k]) };
        let other = random_tensor(rng, &os);
        let r = random_tensor(rng, &[m, n]);
        let x = random_tensor(rng, &xs);
        let f: Case = Box::new(move |t, v| {
            let o = t.constant(other.shape(), other.data().to_vec())?;
            let y = if arg == 0 { t.matmul(v, o)? } else { t.matmul(o, v)? };
            project(t, y, &r)
        });
        cases.push((format!("matmul[{arg}]"), x, f));
    }
    // unary maps
    {
        let x = random_tensor(rng, &[7]);
        let r = random_tensor(rng, &[7]);
        let s = rng.random_range(-2.0..2.0);
        cases.push(("scale".into(), x, Box::new(move |t, v| {
            let y = t.scale(v, s);
            project(t, y, &r)
        })));
        let x = random_tensor(rng, &[7]);
        let r = random_tensor(rng, &[7]);
        cases.push(("add_scalar".into(), x, Box::new(move |t, v| {
            let y = t.add_scalar(v, 0.7);
            let y = t.mul(y, y)?;
            project(t, y, &r)
        })));
        let x = off_kink_tensor(rng, &[9]);
        let r = random_tensor(rng, &[9]);
        cases.push(("relu".into(), x, Box::new(move |t, v| {
            let y = t.relu(v);
            project(t, y, &r)
        })));
        let x = random_tensor(rng, &[8]);
        let r = random_tensor(rng, &[8]);
        let keep = random_keep(rng, 8);
        cases.push(("select".into(), x, Box::new(move |t, v| {
            let y = t.select(v, keep.clone())?;
            project(t, y, &r)
        })));
        let x = random_tensor(rng, &[8]);
        let r = random_tensor(rng, &[8]);
        let scores = random_tensor(rng, &[8]);
        let keep = random_keep(rng, 8);
        cases.push(("straight_through[w]".into(), x, Box::new(move |t, v| {
            let s = t.leaf(&scores.clone().with_grad());
            let y = t.straight_through(v, s, keep.clone())?;
            project(t, y, &r)
        })));
        let x = random_tensor(rng, &[6]);
        cases.push(("sum".into(), x, Box::new(|t, v| {
            let y = t.mul(v, v)?;
            Ok(t.sum(y))
        })));
        let x = random_tensor(rng, &[2, 5]);
        cases.push(("l2_norm".into(), x, Box::new(|t, v| Ok(t.l2_norm(v)))));
    }
    // broadcast bias, both arguments
    for arg in 0..2 {
        let (b, k) = (3, 4);
        let (row, table) = ([k], [b, k]);
        let (xs, os): (&[usize], &[usize]) = if arg == 0 { (&table, &row) } else { (&row, &table) };
        let other = random_tensor(rng, os);
        let x = random_tensor(rng, xs);
        let r = random_tensor(rng, &[b, k]);
        let f: Case = Box::new(move |t, v| {
            let o = t.constant(other.shape(), other.data().to_vec())?;
            let y = if arg == 0 { t.add_row_bias(v, o)? } else { t.add_row_bias(o, v)? };
            project(t, y, &r)
        });
        cases.push((format!("add_row_bias[{arg}]"), x, f));
    }
    // pooling and loss
    {
        let x = random_tensor(rng, &[2, 3, 4, 3]);
        let r = random_tensor(rng, &[2, 3]);
        cases.push(("mean_pool".into(), x, Box::new(move |t, v| {
            let y = t.mean_pool(v)?;
            project(t, y, &r)
        })));
        let x = random_tensor(rng, &[4, 5]);
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..5)).collect();
        cases.push(("softmax_cross_entropy".into(), x, Box::new(move |t, v| t.softmax_cross_entropy(v, &labels))));
    }
    // batch norm: input, gamma, beta; train and eval statistics
    for train in [true, false] {
        for arg in 0..3 {
            let c = 3;
            let shape = [2, c, 4, 3];
            let xin = random_tensor(rng, &shape);
            let gamma = random_tensor(rng, &[c]);
            let beta = random_tensor(rng, &[c]);
            let mut stats = BatchNormStats::new(c);
            stats.mean = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
            stats.var = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
            let r = random_tensor(rng, &shape);
            let x = [&xin, &gamma, &beta][arg].clone();
            let f: Case = Box::new(move |t, v| {
                let mut args = [xin.clone(), gamma.clone(), beta.clone()].map(|a| t.leaf(&a));
                args[arg] = v;
                let (y, _) = t.batch_norm(args[0], args[1], args[2], &stats, train)?;
                project(t, y, &r)
            });
            let mode = if train { "train" } else { "eval" };
            cases.push((format!("batch_norm_{mode}[{arg}]"), x, f));
        }
    }
    // spatial graph convolution: input and theta, two skeletons
    for (n, prop) in [(3usize, prop3), (5, prop5)] {
        for arg in 0..2 {
            let (cin, cout) = (2 + rng.random_range(0..2), 2 + rng.random_range(0..2));
            let xin = random_tensor(rng, &[2, cin, 4, n]);
            let theta = random_tensor(rng, &[cin, cout]);
            let r = random_tensor(rng, &[2, cout, 4, n]);
            let x = if arg == 0 { xin.clone() } else { theta.clone() };
            let prop = prop.clone();
            let f: Case = Box::new(move |t, v| {
                let (a, b) = if arg == 0 { (v, t.leaf(&theta)) } else { (t.leaf(&xin), v) };
                let y = t.sgcn(a, b, prop.clone())?;
                project(t, y, &r)
            });
            cases.push((format!("sgcn_n{n}[{arg}]"), x, f));
        }
    }
    // temporal convolution: input and omega, several kernel widths
    for taps in [1usize, 3, 5, 7] {
        for arg in 0..2 {
            let c = 2 + rng.random_range(0..2);
            let xin = random_tensor(rng, &[2, c, 4, 3]);
            let omega = random_tensor(rng, &[c, taps]);
            let r = random_tensor(rng, &[2, c, 4, 3]);
            let x = if arg == 0 { xin.clone() } else { omega.clone() };
            let f: Case = Box::new(move |t, v| {
                let (a, b) = if arg == 0 { (v, t.leaf(&omega)) } else { (t.leaf(&xin), v) };
                let y = t.tgcn(a, b)?;
                project(t, y, &r)
            });
            cases.push((format!("tgcn_k{taps}[{arg}]"), x, f));
        }
    }
    cases
}

/// Agreement between the tape gradient of the micro network's loss and
/// central differences, taken over the input and every parameter tensor
/// as one vector.
struct NetworkCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)`
    relative: f64,
    /// Largest per-coordinate `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    worst_coordinate: f64,
    /// Largest per-coordinate `|analytic - numeric|`.
    worst_absolute: f64,
}

fn micro_network_error(seed: u64, view_mask: Option<&MaskSet>, mode: Mode) -> NetworkCheck {
    let config = NetConfig {
        in_channels: 3,
        channels: vec![3, 4, 4, 3],
        num_classes: 3,
        temporal_half_window: 2,
        residual: true,
        adjacency: AdjacencyMode::Normalized,
        parents: vec![0, 0, 1],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = StgcnNetwork::new(&config, seed).unwrap();
    // non-trivial batch-norm affine parameters and running statistics
    for b in &mut net.blocks {
        for bn in [&mut b.bn1, &mut b.bn2] {
            for v in bn.gamma.data_mut() {
                *v = rng.random_range(0.5..1.5);
            }
            for v in bn.beta.data_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
            for v in &mut bn.stats.mean {
                *v = rng.random_range(-0.3..0.3);
            }
            for v in &mut bn.stats.var {
                *v = rng.random_range(0.5..2.0);
            }
        }
    }
    let x = random_tensor(&mut rng, &[2, 3, 4, 3]);
    let labels = [rng.random_range(0..3), rng.random_range(0..3)];
    let view = match view_mask {
        Some(m) => WeightView::Masked(m),
        None => WeightView::Dense,
    };

    let loss_of = |net: &StgcnNetwork, x: &Tensor| -> f64 {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let mut pass = net.forward_on(tape, xv, mode, view).unwrap();
        let l = pass.tape.softmax_cross_entropy(pass.logits, &labels).unwrap();
        pass.tape.value(l)[0]
    };

    let mut tape = Tape::new();
    let xv = tape.leaf(&x.clone().with_grad());
    let mut pass = net.forward_on(tape, xv, mode, view).unwrap();
    let l = pass.tape.softmax_cross_entropy(pass.logits, &labels).unwrap();
    let params = pass.params.clone();
    let grads = pass.tape.backward(l).unwrap();

    let eps = 1e-6;
    let mut analytic = grads.get(xv).unwrap().to_vec();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = loss_of(&net, &probe);
        probe.data_mut()[i] = orig - eps;
        let down = loss_of(&net, &probe);
        probe.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * eps));
    }
    for (k, pv) in params.iter().enumerate() {
        let n = net.params()[k].numel();
        analytic.extend(grads.get(*pv).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]));
        for i in 0..n {
            let orig = net.params()[k].data()[i];
            net.params_mut()[k].data_mut()[i] = orig + eps;
            let up = loss_of(&net, &x);
            net.params_mut()[k].data_mut()[i] = orig - eps;
            let down = loss_of(&net, &x);
            net.params_mut()[k].data_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * eps));
        }
    }

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let mut check = NetworkCheck {
        relative: norm(&diff) / norm(&analytic).max(norm(&numeric)),
        worst_coordinate: 0.0,
        worst_absolute: 0.0,
    };
    for ((a, n), d) in analytic.iter().zip(&numeric).zip(&diff) {
        check.worst_absolute = check.worst_absolute.max(d.abs());
        check.worst_coordinate = check.worst_coordinate.max(d.abs() / a.abs().max(n.abs()).max(1e-8));
    }
    check
}

fn criterion_gradients() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut primitive_worst = (0.0f64, String::new());
    let mut count = 0;
    for _round in 0..4 {
        for (name, x, f) in primitive_cases(&mut rng) {
            let err = grad_check(f, &x, 1e-6).unwrap();
            count += 1;
            if err > primitive_worst.0 {
                primitive_worst = (err, name);
            }
        }
    }
    // straight-through scores: the rule is upstream * w, checked exactly
    for _ in 0..8 {
        let n = 10;
        let (w, s, r) = (random_tensor(&mut rng, &[n]), random_tensor(&mut rng, &[n]), random_tensor(&mut rng, &[n]));
        let keep = random_keep(&mut rng, n);
        let mut t = Tape::new();
        let (wv, sv) = (t.leaf(&w.clone().with_grad()), t.leaf(&s.clone().with_grad()));
        let y = t.straight_through(wv, sv, keep).unwrap();
        let loss = project(&mut t, y, &r).unwrap();
        let g = t.backward(loss).unwrap();
        let expected: Vec<f64> = r.data().iter().zip(w.data()).map(|(a, b)| a * b).collect();
        count += 1;
        if g.get(sv).unwrap() != expected.as_slice() {
            primitive_worst = (f64::INFINITY, "straight_through[scores]".into());
        }
    }

    let mut network_worst = 0.0f64;
    let registry = StgcnNetwork::new(
        &NetConfig {
            channels: vec![3, 4, 4, 3],
            num_classes: 3,
            temporal_half_window: 2,
            parents: vec![0, 0, 1],
            ..NetConfig::default()
        },
        0,
    )
    .unwrap()
    .registry();
    let (mut coordinate_worst, mut absolute_worst) = (0.0f64, 0.0f64);
    for seed in 0..4u64 {
        let mask = random_mask(&registry, 0.5, seed).unwrap();
        for (view, mode) in [(None, Mode::Train), (None, Mode::Eval), (Some(&mask), Mode::Train)] {
            let check = micro_network_error(seed, view, mode);
            network_worst = network_worst.max(check.relative);
            coordinate_worst = coordinate_worst.max(check.worst_coordinate);
            absolute_worst = absolute_worst.max(check.worst_absolute);
            count += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = primitive_worst.0 <= 1e-5 && network_worst <= 1e-4 && count >= 100 && secs < 120.0;
    (
        pass,
        format!(
            "{count} cases; primitive max rel err {:.2e} ({}) <= 1e-5; micro-network max rel err {network_worst:.2e} <= 1e-4 \
             (per coordinate {coordinate_worst:.2e}, max abs diff {absolute_worst:.2e}); {secs:.1}s",
            primitive_worst.0, primitive_worst.1
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. masked forward equals the zeroed twin

fn criterion_masked_forward() -> Verdict {
    let config = NetConfig {
        channels: vec![6, 8],
        num_classes: 4,
        temporal_half_window: 2,
        ..NetConfig::default()
    };
    let net = StgcnNetwork::new(&config, 7).unwrap();
    let registry = net.registry();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x = random_tensor(&mut rng, &[3, 3, 10, 17]);
    let mut checked = 0;
    let mut identical = 0;
    for s in [0.5, 0.8, 0.95] {
        for i in 0..20u64 {
            let mask = random_mask(&registry, s, derive_seed(i, "acceptance-mask")).unwrap();
            let mut twin = net.clone();
            twin.zero_masked(&mask).unwrap();
            for mode in [Mode::Train, Mode::Eval] {
                let run = |n: &StgcnNetwork, v: WeightView<'_>| {
                    let mut tape = Tape::new();
                    let xv = tape.leaf(&x);
                    let pass = n.forward_on(tape, xv, mode, v).unwrap();
                    pass.tape.tensor(pass.logits)
                };
                let masked = run(&net, WeightView::Masked(&mask));
                let zeroed = run(&twin, WeightView::Dense);
                checked += 1;
                if masked.bits_eq(&zeroed) {
                    identical += 1;
                }
            }
        }
    }
    (
        identical == checked,
        format!("{identical}/{checked} forward passes bit-identical (20 masks x 3 levels x train/eval)"),
    )
}

// ---------------------------------------------------------------------------
// 3. binarization against a sort-based oracle

fn oracle_keep(scores: &[f64], s: f64) -> Vec<bool> {
    let n = scores.len();
    let zeros = (s * n as f64).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let mut keep = vec![true; n];
    for &i in idx.iter().take(zeros) {
        keep[i] = false;
    }
    keep
}

fn criterion_binarize() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agree = 0;
    let mut exact_counts = 0;
    let total = 1000;
    for case in 0..total {
        let n = rng.random_range(1..300);
        let scores: Vec<f64> = match case % 4 {
            0 => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            1 => vec![rng.random_range(-1.0..1.0); n],
            2 => (0..n).map(|_| rng.random_range(0..4) as f64 * 0.25).collect(),
            _ => (0..n).map(|_| if rng.random_bool(0.7) { 0.5 } else { rng.random_range(0.0..1.0) }).collect(),
        };
        let s = match case % 5 {
            0 => [0.0, 0.5, 0.8, 0.95, 0.99, 1.0][rng.random_range(0..6)],
            _ => rng.random_range(0.0..=1.0),
        };
        let keep = binarize_flat(&scores, s).unwrap();
        if keep == oracle_keep(&scores, s) {
            agree += 1;
        }
        if keep.iter().filter(|k| !**k).count() == zero_count(s, n) && zero_count(s, n) == (s * n as f64).round() as usize
        {
            exact_counts += 1;
        }
    }
    (
        agree == total && exact_counts == total,
        format!("{agree}/{total} vectors match the oracle; {exact_counts}/{total} have exactly round(S*n) zeros"),
    )
}

// ---------------------------------------------------------------------------
// 4. fine-tune freeze invariant

fn criterion_freeze(lab: &Lab) -> Verdict {
    let config = NetConfig {
        channels: vec![8, 8],
        temporal_half_window: 2,
        num_classes: 8,
        ..NetConfig::default()
    };
    let mut net = init_network(&config, 11).unwrap();
    let registry = net.registry();
    let mask = random_mask(&registry, 0.8, 12).unwrap();
    let mut opt = optimizer_for(&net, 0.9, 5e-4);
    hard_zero(&mut net, &mask, &mut opt).unwrap();
    let indices: Vec<usize> = (0..lab.train.len()).collect();
    let batches: Vec<_> = indices.chunks(16).take(50).map(|c| lab.train.batch(c).unwrap()).collect();
    for step in 0..200 {
        let (x, y) = &batches[step % batches.len()];
        finetune_step(&mut net, &mask, x, y, &mut opt, 0.05).unwrap();
    }
    let params = net.params();
    let mut bad_weights = 0;
    let mut bad_momentum = 0;
    for (g, (idx, _)) in registry.maskable().enumerate() {
        for (i, &k) in mask.keep(g).iter().enumerate() {
            if !k {
                if params[idx].data()[i].to_bits() != 0 {
                    bad_weights += 1;
                }
                if opt.velocity(idx)[i].to_bits() != 0 {
                    bad_momentum += 1;
                }
            }
        }
    }
    let report = sparsity_report(&mask, &registry).unwrap();
    let bits_kept = mask.bits().filter(|b| *b).count();
    let expected_zeros = zero_count(0.8, registry.count_params(true));
    let report_ok = report.kept == bits_kept
        && report.total == mask.total()
        && report.total - report.kept == expected_zeros
        && report.groups.iter().zip(mask.entries()).all(|(g, e)| g.kept == e.keep().iter().filter(|k| **k).count());
    (
        bad_weights == 0 && bad_momentum == 0 && report_ok,
        format!(
            "200 steps at S=0.8: {bad_weights} non-zero masked weights, {bad_momentum} non-zero masked momenta; report kept {} of {} (bits {bits_kept})",
            report.kept, report.total
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. group-lasso shrinkage

fn warmup_end_norm(o: &TrainOutcome) -> f64 {
    o.log
        .records
        .iter()
        .filter(|r| r.stage == Stage::Warmup)
        .next_back()
        .expect("warm-up records")
        .wstar_norm
}

fn criterion_shrinkage(lab: &mut Lab) -> Verdict {
    let t0 = Instant::now();
    // Warm-up only runs: the cosine schedule spans exactly the warm-up epochs.
    let penalized = Arm {
        epochs: WARMUP,
        ..Arm::generator(0.8)
    };
    let with: Vec<(f64, f64)> = lab
        .runs(penalized)
        .iter()
        .map(|o| (o.initial_wstar_norm.unwrap(), warmup_end_norm(o)))
        .collect();
    let without: Vec<f64> = lab
        .runs(Arm { lambda: 0.0, ..penalized })
        .iter()
        .map(warmup_end_norm)
        .collect();
    let secs = t0.elapsed().as_secs_f64();
    let init = mean(&with.iter().map(|p| p.0).collect::<Vec<_>>());
    let end = mean(&with.iter().map(|p| p.1).collect::<Vec<_>>());
    let ratio = end / init;
    let baseline = mean(&without);
    (
        ratio <= 0.2 && end < baseline && secs <= 900.0,
        format!(
            "S=0.8: ||W*|| {init:.4} -> {end:.4} after warm-up (ratio {ratio:.4} <= 0.2); \
             lambda=0 arm {baseline:.4} (3-seed means); {secs:.0}s <= 900s"
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. dense vs sparse accuracy

fn criterion_accuracy(lab: &mut Lab) -> Verdict {
    let t0 = Instant::now();
    let dense = lab.accuracies(Arm::dense());
    let s80 = lab.accuracies(Arm::generator(0.8));
    let s99 = lab.accuracies(Arm::generator(0.99));
    let secs = t0.elapsed().as_secs_f64();
    let (d, a, b) = (mean(&dense), mean(&s80), mean(&s99));
    (
        d >= 0.95 && d - a <= 0.02 && d - b > d - a && secs <= 2700.0,
        format!(
            "dense {d:.4} >= 0.95 [{}]; S=0.8 {a:.4} within 0.02 [{}]; S=0.99 {b:.4} < S=0.8 [{}]; {secs:.0}s <= 2700s",
            fmt_list(&dense),
            fmt_list(&s80),
            fmt_list(&s99)
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. warm-up ablation

fn criterion_warmup(lab: &mut Lab) -> Verdict {
    let with = lab.accuracies(Arm::generator(0.95));
    let without = lab.accuracies(Arm {
        warmup: 0,
        ..Arm::generator(0.95)
    });
    let (a, b) = (mean(&with), mean(&without));
    let chance = 1.0 / lab.test.num_classes as f64;
    let note = if a <= chance && b <= chance {
        "; both arms at chance, the comparison holds only with equality"
    } else {
        ""
    };
    (
        a >= b,
        format!(
            "S=0.95: warm-up 20 {a:.4} [{}] >= warm-up 0 {b:.4} [{}]{note}",
            fmt_list(&with),
            fmt_list(&without)
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. learned mask over frozen weights vs a random mask

/// Random mask of the same sparsity on the same frozen initial weights,
/// with batch-norm statistics calibrated by train-mode passes.
fn random_mask_accuracy(lab: &Lab, seed: u64, sparsity: f64) -> f64 {
    let mut net = init_network(&net_config(), seed).unwrap();
    let mask = random_mask(&net.registry(), sparsity, derive_seed(seed, "random-arm")).unwrap();
    recalibrate_batch_norm(&mut net, Some(&mask), &lab.train, 32, RECALIBRATION_SWEEPS).unwrap();
    evaluate(&net, Some(&mask), &lab.test).unwrap().accuracy
}

fn criterion_lth(lab: &mut Lab) -> Verdict {
    let learned = lab.accuracies(Arm::lth(0.5));
    let random: Vec<f64> = SEEDS.iter().map(|&s| random_mask_accuracy(lab, s, 0.5)).collect();
    let (a, b) = (mean(&learned), mean(&random));
    (
        a - b >= 0.05,
        format!(
            "S=0.5 frozen weights, score lr {SCORE_LR}: learned mask {a:.4} [{}] vs random mask {b:.4} [{}]; gap {:.4} >= 0.05",
            fmt_list(&learned),
            fmt_list(&random),
            a - b
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. multi-level ensemble

fn criterion_ensemble(lab: &mut Lab) -> Verdict {
    let labels = lab.test.labels();
    let ids: Vec<u64> = lab.test.sequences.iter().map(|s| s.sample_id).collect();
    let mut fraction_ok = true;
    let mut fractions = Vec::new();
    let mut ensemble_acc = Vec::new();
    let mut member_acc = vec![Vec::new(); ENSEMBLE_LEVELS.len()];
    let mut ensemble_below = 0usize;
    let mut member_below = vec![0usize; ENSEMBLE_LEVELS.len()];
    for (k, _) in SEEDS.iter().enumerate() {
        let mut members = Vec::new();
        for &s in &ENSEMBLE_LEVELS {
            let o = &lab.runs(Arm::generator(s))[k];
            let ckpt = Checkpoint::new(o.net.clone(), o.mask.clone(), Modality::J, "final").unwrap();
            members.push(Member::new(ckpt, Modality::J, 1.0).unwrap());
        }
        let f = param_fraction(&members).unwrap();
        fraction_ok &= f == 0.66;
        fractions.push(f);
        let (probs, tables) = assemble_predict(&members, Aggregation::Mean, &lab.test).unwrap();
        ensemble_acc.push(score_probabilities(&probs, &labels).accuracy);
        ensemble_below += confidence_report(&probs, &ids, 0.5).unwrap().below;
        for (m, table) in tables.iter().enumerate() {
            member_acc[m].push(score_probabilities(table, &labels).accuracy);
            member_below[m] += confidence_report(table, &ids, 0.5).unwrap().below;
        }
    }
    let member_means: Vec<f64> = member_acc.iter().map(|v| mean(v)).collect();
    let best = (0..member_means.len())
        .max_by(|&a, &b| member_means[a].total_cmp(&member_means[b]).then(b.cmp(&a)))
        .unwrap();
    let ens = mean(&ensemble_acc);
    let pass = fraction_ok && ens >= member_means[best] - 0.005 && ensemble_below <= member_below[best];
    (
        pass,
        format!(
            "param_fraction [{}] == 0.66; ensemble {ens:.4} vs best member S={} {:.4} (members [{}]); below-0.5 count {ensemble_below} <= {} (summed over seeds)",
            fmt_list(&fractions),
            ENSEMBLE_LEVELS[best],
            member_means[best],
            fmt_list(&member_means),
            member_below[best]
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. reproducibility

fn criterion_reproducibility(lab: &Lab) -> Verdict {
    let config = NetConfig {
        channels: vec![6, 6],
        temporal_half_window: 2,
        num_classes: 8,
        ..NetConfig::default()
    };
    let cfg = TrainConfig {
        mode: TrainMode::Generator,
        epochs: 3,
        warmup_epochs: 2,
        sparsity: 0.8,
        seed: 5,
        ..TrainConfig::default()
    };
    let run = || train(init_network(&config, 5).unwrap(), &lab.train, Some(&lab.test), &cfg).unwrap();
    let (a, b) = (run(), run());
    let logs_equal = a.log.to_csv() == b.log.to_csv();

    let ckpt = Checkpoint::new(a.net.clone(), a.mask.clone(), Modality::J, "final").unwrap();
    let bytes = ckpt.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    let params_exact = ckpt.net.params().iter().zip(back.net.params()).all(|(x, y)| x.bits_eq(y));
    let buffers_exact = ckpt.net.buffers().iter().zip(back.net.buffers()).all(|((_, x), (_, y))| {
        x.mean.iter().chain(&x.var).zip(y.mean.iter().chain(&y.var)).all(|(p, q)| p.to_bits() == q.to_bits())
    });
    let round_trip = params_exact && buffers_exact && back.mask == ckpt.mask && back.to_bytes().unwrap() == bytes;
    (
        logs_equal && round_trip,
        format!(
            "rerun log byte-equal: {logs_equal} ({} bytes); checkpoint round trip bit-exact: {round_trip} ({} bytes)",
            a.log.to_csv().len(),
            bytes.len()
        ),
    )
}

// ---------------------------------------------------------------------------

/// `ACCEPTANCE_CRITERIA=1,3` restricts the run to the listed criteria.
fn selected() -> Option<Vec<usize>> {
    let list = std::env::var("ACCEPTANCE_CRITERIA").ok()?;
    Some(list.split(',').filter_map(|n| n.trim().parse().ok()).collect())
}

fn main() -> ExitCode {
    let mut lab = Lab::new();
    let only = selected();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            return;
        }
        let t0 = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(f));
        let (pass, detail) = verdict.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {:<4} {name}: {detail} [{:.0}s]",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    };
    report(1, "gradient suite", &mut criterion_gradients);
    report(2, "masked forward equivalence", &mut criterion_masked_forward);
    report(3, "binarization oracle", &mut criterion_binarize);
    report(4, "fine-tune freeze invariant", &mut || criterion_freeze(&lab));
    report(10, "reproducibility", &mut || criterion_reproducibility(&lab));
    report(5, "group-lasso shrinkage", &mut || criterion_shrinkage(&mut lab));
    report(6, "dense vs sparse accuracy", &mut || criterion_accuracy(&mut lab));
    report(7, "warm-up ablation", &mut || criterion_warmup(&mut lab));
    report(8, "learned vs random mask", &mut || criterion_lth(&mut lab));
    report(9, "multi-level ensemble", &mut || criterion_ensemble(&mut lab));
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
