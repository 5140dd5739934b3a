//! Run configuration: a TOML file with `[data]`, `[net]` and `[train]`
//! sections, overridden by command-line flags.
//!
//! ```toml
//! [data]
//! train = "data/train.skel"   # omit both paths to train on synthetic data
//! test = "data/test.skel"
//! modality = "j"
//!
//! [data.synth]
//! noise_sigma = 0.2
//!
//! [net]
//! channels = [32, 32, 64, 64]
//! temporal_half_window = 5
//!
//! [train]
//! mode = "generator"
//! sparsity = 0.8
//! epochs = 30
//! warmup_epochs = 20
//! ```
//!
//! `net.num_classes` and `net.in_channels` are always taken from the data.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_stgcn::net::NetConfig;
use sparse_stgcn::skeleton::{io, synth_dataset, Dataset, Modality, SkeletonGraph, Split, SynthConfig, HUMAN17_PARENTS};
use sparse_stgcn::trainer::TrainConfig;
use sparse_stgcn::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub modality: Modality,
    /// Used when no dataset paths are given.
    pub synth: SynthConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Defaults, or the contents of `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Usage(format!("cannot serialise config: {e}")))
    }

    /// Loads the train and test splits (test may be absent) in the raw joint
    /// modality.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        match (&self.data.train, &self.data.test) {
            (None, None) => {
                let (train, test) = synth_dataset(&self.data.synth)?;
                Ok((train, Some(test)))
            }
            (Some(train), test) => {
                let train = io::load(train, Split::Train)?;
                let test = test.as_ref().map(|p| io::load(p, Split::Test)).transpose()?;
                Ok((train, test))
            }
            (None, Some(_)) => Err(Error::Usage("data.test is set but data.train is not".into())),
        }
    }

    /// Fills the architecture fields that follow from the data.
    pub fn resolve_net(&mut self, data: &Dataset) -> Result<()> {
        self.net.num_classes = data.num_classes;
        self.net.in_channels = data.dims;
        if self.net.parents.len() != data.joints {
            if self.net.parents != HUMAN17_PARENTS {
                return Err(Error::Graph(format!(
                    "net.parents lists {} joints but the data has {}",
                    self.net.parents.len(),
                    data.joints
                )));
            }
            self.net.parents = SkeletonGraph::default_for(data.joints)?.parents().to_vec();
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<SkeletonGraph> {
        SkeletonGraph::from_parents(&self.net.parents)
    }
}

/// Brings both splits into the configured modality.
pub fn convert(
    graph: &SkeletonGraph,
    modality: Modality,
    train: &Dataset,
    test: Option<&Dataset>,
) -> (Dataset, Option<Dataset>) {
    (train.to_modality(graph, modality), test.map(|t| t.to_modality(graph, modality)))
}
