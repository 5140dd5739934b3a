use std::sync::Arc;

use sparse_stgcn::net::NetConfig;
use sparse_stgcn::skeleton::{synth_dataset, Dataset, SynthConfig};
use sparse_stgcn::sparsity::random_mask;
use sparse_stgcn::tensor::{Tape, Tensor};
use sparse_stgcn::trainer::{
    dense_step, dropped_flags, group_lasso, group_lasso_on, init_network, optimizer_for, warmup_step, wstar_norm,
    wstar_norms,
};

fn flags(v: &[bool]) -> Arc<[bool]> {
    v.iter().copied().collect()
}

fn small_data() -> Dataset {
    let cfg = SynthConfig {
        num_classes: 3,
        samples_per_class: 4,
        test_per_class: 1,
        joints: 5,
        frames: 8,
        ..SynthConfig::default()
    };
    synth_dataset(&cfg).unwrap().0
}

fn small_net() -> NetConfig {
    NetConfig {
        channels: vec![4, 4],
        num_classes: 3,
        temporal_half_window: 2,
        parents: vec![0, 0, 1, 1, 0],
        ..NetConfig::default()
    }
}

#[test]
fn penalty_is_sum_of_group_norms_of_dropped_entries() {
    // Group 0 drops (3, 4) and keeps 7; group 1 drops (5, 12).
    let a = Tensor::from_vec(vec![3.0, 4.0, 7.0]).with_grad();
    let b = Tensor::from_vec(vec![5.0, 12.0]).with_grad();
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(&a), tape.leaf(&b));
    let dropped = [flags(&[true, true, false]), flags(&[true, true])];
    let loss = group_lasso_on(&mut tape, &[va, vb], &dropped).unwrap();
    assert_eq!(tape.value(loss), &[18.0]);
    let grads = tape.backward(loss).unwrap();
    let close = |got: &[f64], want: &[f64]| got.iter().zip(want).all(|(g, w)| (g - w).abs() <= 1e-15);
    assert!(close(grads.get(va).unwrap(), &[0.6, 0.8, 0.0]));
    assert!(close(grads.get(vb).unwrap(), &[5.0 / 13.0, 12.0 / 13.0]));
}

#[test]
fn fully_kept_group_contributes_nothing() {
    let a = Tensor::from_vec(vec![1.0, -2.0]).with_grad();
    let mut tape = Tape::new();
    let va = tape.leaf(&a);
    let loss = group_lasso_on(&mut tape, &[va], &[flags(&[false, false])]).unwrap();
    assert_eq!(tape.value(loss), &[0.0]);
    let grads = tape.backward(loss).unwrap();
    assert!(grads.get(va).unwrap_or(&[0.0, 0.0]).iter().all(|g| *g == 0.0));
}

#[test]
fn mismatched_group_lists_are_rejected() {
    let a = Tensor::from_vec(vec![1.0]);
    let mut tape = Tape::new();
    let va = tape.leaf(&a);
    assert!(group_lasso_on(&mut tape, &[va], &[]).is_err());
    assert!(group_lasso_on(&mut tape, &[], &[]).is_err());
}

#[test]
fn network_penalty_matches_direct_sum_over_parameters() {
    let net = init_network(&small_net(), 3).unwrap();
    let registry = net.registry();
    let mask = random_mask(&registry, 0.6, 9).unwrap();
    let params = net.params();
    let mut expected = Vec::new();
    for (g, (idx, _)) in registry.maskable().enumerate() {
        let mut sq = 0.0;
        for (w, keep) in params[idx].data().iter().zip(mask.keep(g).iter()) {
            if !keep {
                sq += w * w;
            }
        }
        expected.push(sq.sqrt());
    }
    let norms = wstar_norms(&net, &mask).unwrap();
    assert_eq!(norms.len(), expected.len());
    for (a, b) in norms.iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
    let sum: f64 = expected.iter().sum();
    assert!((group_lasso(&net, &mask).unwrap() - sum).abs() <= 1e-12 * sum);
    let global = expected.iter().map(|n| n * n).sum::<f64>().sqrt();
    assert!((wstar_norm(&net, &mask).unwrap() - global).abs() <= 1e-12 * global);
}

#[test]
fn zero_lambda_warmup_step_equals_dense_step() {
    let data = small_data();
    let idx: Vec<usize> = (0..6).collect();
    let (x, y) = data.batch(&idx).unwrap();
    let mut dense = init_network(&small_net(), 1).unwrap();
    let mut warm = dense.clone();
    let mask = random_mask(&warm.registry(), 0.7, 4).unwrap();
    let dropped = dropped_flags(&mask);
    let mut opt_d = optimizer_for(&dense, 0.9, 5e-4);
    let mut opt_w = optimizer_for(&warm, 0.9, 5e-4);
    for step in 0..3 {
        let lr = 0.1 / (step + 1) as f64;
        let a = dense_step(&mut dense, &x, &y, &mut opt_d, lr).unwrap();
        let b = warmup_step(&mut warm, &mask, &dropped, &x, &y, 0.0, &mut opt_w, lr).unwrap();
        assert_eq!(a.class_loss.to_bits(), b.class_loss.to_bits());
        assert_eq!(b.penalty, 0.0);
    }
    for (p, q) in dense.params().iter().zip(warm.params()) {
        assert!(p.bits_eq(q));
    }
}

#[test]
fn penalty_step_moves_dropped_weights_toward_zero() {
    let data = small_data();
    let idx: Vec<usize> = (0..6).collect();
    let (x, y) = data.batch(&idx).unwrap();
    let start = init_network(&small_net(), 2).unwrap();
    let mask = random_mask(&start.registry(), 0.8, 5).unwrap();
    let dropped = dropped_flags(&mask);
    let before = wstar_norm(&start, &mask).unwrap();

    let mut plain = start.clone();
    let mut penalized = start.clone();
    let mut opt_p = optimizer_for(&plain, 0.0, 0.0);
    let mut opt_q = optimizer_for(&penalized, 0.0, 0.0);
    warmup_step(&mut plain, &mask, &dropped, &x, &y, 0.0, &mut opt_p, 0.01).unwrap();
    warmup_step(&mut penalized, &mask, &dropped, &x, &y, 5.0, &mut opt_q, 0.01).unwrap();
    let after_plain = wstar_norm(&plain, &mask).unwrap();
    let after_pen = wstar_norm(&penalized, &mask).unwrap();
    assert!(after_pen < after_plain);
    assert!(after_pen < before);
}
