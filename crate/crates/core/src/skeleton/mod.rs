//! Skeleton graphs, labelled sequences, input modalities and the synthetic
//! dataset used for desk-scale experiments.

mod dataset;
mod graph;
pub mod io;
mod sequence;
mod synth;

pub use dataset::{make_batch, Dataset, Split};
pub use graph::{AdjacencyMode, SkeletonGraph, HUMAN17_PARENTS};
pub use sequence::{preprocess, to_modality, Modality, SkeletonSequence};
pub use synth::{synth_dataset, SynthConfig};
