use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, SkeletonGraph, SkeletonSequence, Split};
use crate::error::{Error, Result};
use crate::rng::{derive_indexed, derive_seed, rng_from};

/// Parameters of the synthetic skeleton task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub test_per_class: usize,
    pub joints: usize,
    pub frames: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 8,
            samples_per_class: 100,
            test_per_class: 50,
            joints: 17,
            frames: 64,
            noise_sigma: 0.1,
            seed: 0,
        }
    }
}

const DIMS: usize = 3;
const MAX_FREQUENCY: u32 = 4;

/// Per-joint sinusoid parameters of one class.
struct Template {
    amplitude: Vec<f64>,
    frequency: Vec<f64>,
    phase: Vec<f64>,
}

fn rest_pose(graph: &SkeletonGraph, seed: u64) -> Vec<f64> {
    let n = graph.num_joints();
    let mut rng = rng_from(derive_seed(seed, "synth-pose"));
    let offsets: Vec<[f64; DIMS]> = (0..n)
        .map(|_| [rng.random_range(-0.3..0.3), rng.random_range(0.1..0.4), rng.random_range(-0.1..0.1)])
        .collect();
    let mut pose = vec![0.0; n * DIMS];
    // parents may have higher indices than children in a general tree
    let mut done = vec![false; n];
    done[graph.root()] = true;
    while done.iter().any(|d| !d) {
        for j in 0..n {
            let p = graph.parent(j);
            if !done[j] && done[p] {
                for c in 0..DIMS {
                    pose[j * DIMS + c] = pose[p * DIMS + c] + offsets[j][c];
                }
                done[j] = true;
            }
        }
    }
    pose
}

fn class_template(seed: u64, class: usize, joints: usize) -> Template {
    let mut rng = rng_from(derive_indexed(seed, "synth-class", class as u64));
    let mut t = Template {
        amplitude: Vec::with_capacity(joints * DIMS),
        frequency: Vec::with_capacity(joints),
        phase: Vec::with_capacity(joints * DIMS),
    };
    for _ in 0..joints {
        t.frequency.push(rng.random_range(1..=MAX_FREQUENCY) as f64);
        for _ in 0..DIMS {
            t.amplitude.push(rng.random_range(0.1..0.6));
            t.phase.push(rng.random_range(0.0..2.0 * PI));
        }
    }
    t
}

fn render(template: &Template, pose: &[f64], joints: usize, frames: usize) -> Vec<f64> {
    let mut f = vec![0.0; joints * frames * DIMS];
    for j in 0..joints {
        for t in 0..frames {
            let angle = 2.0 * PI * template.frequency[j] * t as f64 / frames as f64;
            for c in 0..DIMS {
                let k = j * DIMS + c;
                f[(j * frames + t) * DIMS + c] = pose[k] + template.amplitude[k] * (angle + template.phase[k]).sin();
            }
        }
    }
    f
}

/// Generates train and test splits of the synthetic task.
///
/// Each class is a fixed set of per-joint sinusoids (class-specific
/// frequency, amplitude and phase) around a shared rest pose of the default
/// skeleton for `joints`. Every sample adds i.i.d. Gaussian noise of scale
/// `noise_sigma` to its class template. Train and test noise come from
/// separate streams of `seed`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<(Dataset, Dataset)> {
    if cfg.num_classes < 2 {
        return Err(Error::Parameter(format!("num_classes must be >= 2, got {}", cfg.num_classes)));
    }
    if cfg.joints == 0 || cfg.frames == 0 {
        return Err(Error::Parameter("joints and frames must be positive".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::Parameter(format!("invalid noise_sigma {}", cfg.noise_sigma)));
    }
    let graph = SkeletonGraph::default_for(cfg.joints)?;
    let pose = rest_pose(&graph, cfg.seed);
    let templates: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|k| render(&class_template(cfg.seed, k, cfg.joints), &pose, cfg.joints, cfg.frames))
        .collect();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let draw = |split: Split, per_class: usize, tag: &str, id_base: u64| -> Result<Dataset> {
        let mut rng = rng_from(derive_seed(cfg.seed, tag));
        let mut sequences = Vec::with_capacity(per_class * cfg.num_classes);
        for i in 0..per_class {
            for (label, template) in templates.iter().enumerate() {
                let features = template
                    .iter()
                    .map(|&v| v + cfg.noise_sigma * noise.sample(&mut rng))
                    .collect();
                let mut s = SkeletonSequence::new(cfg.joints, cfg.frames, DIMS, features, label)?;
                s.subject_id = (i % 5) as u64;
                s.sample_id = id_base + sequences.len() as u64;
                sequences.push(s);
            }
        }
        Dataset::new(sequences, cfg.num_classes, (cfg.joints, cfg.frames, DIMS), split)
    };

    let train = draw(Split::Train, cfg.samples_per_class, "synth-train", 0)?;
    let test = draw(Split::Test, cfg.test_per_class, "synth-test", 1_000_000)?;
    Ok((train, test))
}
