use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Checkpoint;
use crate::skeleton::Modality;

/// How member probabilities are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Unweighted arithmetic mean of the members' softmax outputs.
    #[default]
    Mean,
    /// Mean weighted by each member's `weight`.
    WeightedMean,
}

/// One entry of an ensemble specification file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberSpec {
    /// Checkpoint path, relative to the specification file.
    pub checkpoint: PathBuf,
    /// Declared sparsity level; checked against the stored mask.
    #[serde(default)]
    pub sparsity: f64,
    #[serde(default)]
    pub modality: Modality,
    /// Only used by [`Aggregation::WeightedMean`].
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Ensemble specification, stored as TOML:
///
/// ```toml
/// aggregation = "mean"
///
/// [[members]]
/// checkpoint = "s80/final.stgw"
/// sparsity = 0.8
/// modality = "j"
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub members: Vec<MemberSpec>,
}

impl EnsembleSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: EnsembleSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::Usage("ensemble specification lists no members".into()));
        }
        for (i, m) in self.members.iter().enumerate() {
            if !(0.0..1.0).contains(&m.sparsity) {
                return Err(Error::Spec(format!("member {i}: sparsity {} outside [0, 1)", m.sparsity)));
            }
            if !(m.weight >= 0.0 && m.weight.is_finite()) {
                return Err(Error::Spec(format!("member {i}: weight {} must be finite and non-negative", m.weight)));
            }
        }
        if self.aggregation == Aggregation::WeightedMean && self.members.iter().all(|m| m.weight == 0.0) {
            return Err(Error::Spec("all member weights are zero".into()));
        }
        Ok(())
    }

    /// Reads a specification file and loads every member checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<(EnsembleSpec, Vec<Member>)> {
        let path = path.as_ref();
        let spec = EnsembleSpec::parse(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let members = spec.load_members(base)?;
        Ok((spec, members))
    }

    /// Loads the member checkpoints, resolving relative paths against `base`.
    pub fn load_members(&self, base: &Path) -> Result<Vec<Member>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let path = base.join(&m.checkpoint);
                let checkpoint = Checkpoint::load(&path)
                    .map_err(|e| Error::Spec(format!("member {i} ({}): {e}", path.display())))?;
                Member::new(checkpoint, m.modality, m.weight)
                    .map_err(|e| Error::Spec(format!("member {i} ({}): {e}", path.display())))
            })
            .collect()
    }
}

/// A loaded ensemble member.
#[derive(Clone, Debug)]
pub struct Member {
    pub checkpoint: Checkpoint,
    pub modality: Modality,
    pub weight: f64,
}

impl Member {
    pub fn new(checkpoint: Checkpoint, modality: Modality, weight: f64) -> Result<Self> {
        if let Some(m) = &checkpoint.mask {
            m.validate(&checkpoint.net.registry())?;
        }
        Ok(Member {
            checkpoint,
            modality,
            weight,
        })
    }

    /// Kept fraction of the maskable weights (1 without a mask).
    pub fn kept_fraction(&self) -> f64 {
        match &self.checkpoint.mask {
            Some(m) => m.kept() as f64 / m.total() as f64,
            None => 1.0,
        }
    }
}
