use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{preprocess, to_modality, Modality, SkeletonGraph, SkeletonSequence};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labelled sequences sharing joint count, length and coordinate dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<SkeletonSequence>,
    pub num_classes: usize,
    pub joints: usize,
    pub frames: usize,
    pub dims: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        sequences: Vec<SkeletonSequence>,
        num_classes: usize,
        (joints, frames, dims): (usize, usize, usize),
        split: Split,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Parameter("num_classes must be positive".into()));
        }
        for (i, s) in sequences.iter().enumerate() {
            if s.label >= num_classes {
                return Err(Error::Input(format!(
                    "sequence {i} has label {} but only {num_classes} classes",
                    s.label
                )));
            }
            if (s.joints, s.frames, s.dims) != (joints, frames, dims) {
                return Err(Error::dim("dataset", &[joints, frames, dims], &[s.joints, s.frames, s.dims]));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("sequence {i} has non-finite features")));
            }
        }
        Ok(Dataset {
            sequences,
            num_classes,
            joints,
            frames,
            dims,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.label).collect()
    }

    /// Applies a modality transform to every sequence.
    pub fn to_modality(&self, graph: &SkeletonGraph, modality: Modality) -> Dataset {
        Dataset {
            sequences: self.sequences.iter().map(|s| to_modality(s, graph, modality)).collect(),
            ..self.clone()
        }
    }

    /// Crops/pads every sequence to `window` frames and root-centres it.
    pub fn preprocess<R: Rng + ?Sized>(
        &self,
        graph: &SkeletonGraph,
        window: usize,
        augment: bool,
        rng: &mut R,
    ) -> Result<Dataset> {
        let sequences = self
            .sequences
            .iter()
            .map(|s| preprocess(s, graph, window, augment, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            sequences,
            frames: window,
            ..self.clone()
        })
    }

    /// Stacks the selected sequences into a `[B, d, T, N]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let seqs: Vec<&SkeletonSequence> = indices.iter().map(|&i| &self.sequences[i]).collect();
        make_batch(&seqs)
    }
}

/// Stacks sequences into a network input `[B, d, T, N]` plus labels.
pub fn make_batch(seqs: &[&SkeletonSequence]) -> Result<(Tensor, Vec<usize>)> {
    let Some(first) = seqs.first() else {
        return Err(Error::Batching("empty batch".into()));
    };
    let (n, t, d) = (first.joints, first.frames, first.dims);
    let mut data = vec![0.0; seqs.len() * d * t * n];
    for (b, s) in seqs.iter().enumerate() {
        if (s.joints, s.frames, s.dims) != (n, t, d) {
            return Err(Error::Batching(format!(
                "sequence {b} has shape {}x{}x{}, expected {n}x{t}x{d}",
                s.joints, s.frames, s.dims
            )));
        }
        for j in 0..n {
            for f in 0..t {
                for c in 0..d {
                    data[((b * d + c) * t + f) * n + j] = s.at(j, f, c);
                }
            }
        }
    }
    let labels = seqs.iter().map(|s| s.label).collect();
    Ok((Tensor::new(&[seqs.len(), d, t, n], data)?, labels))
}
