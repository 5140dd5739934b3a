use std::fmt;

use crate::error::{Error, Result};

/// Role of a parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// Channel-mixing weights of a spatial graph convolution.
    Theta,
    /// Depthwise temporal kernel.
    Omega,
    /// Batch-norm scale or shift.
    Bn,
    /// Classification head.
    Head,
}

impl ParamKind {
    /// Only the convolution weights take part in masking.
    pub fn maskable(self) -> bool {
        matches!(self, ParamKind::Theta | ParamKind::Omega)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ParamKind::Theta => 0,
            ParamKind::Omega => 1,
            ParamKind::Bn => 2,
            ParamKind::Head => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => ParamKind::Theta,
            1 => ParamKind::Omega,
            2 => ParamKind::Bn,
            3 => ParamKind::Head,
            other => return Err(Error::Checkpoint(format!("unknown parameter kind {other}"))),
        })
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Theta => "theta",
            ParamKind::Omega => "omega",
            ParamKind::Bn => "bn",
            ParamKind::Head => "head",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub maskable: bool,
}

impl ParamEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered manifest of a network's parameters. The index of an entry is
/// the index of the tensor in [`StgcnNetwork::params`](super::StgcnNetwork::params).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamRegistry {
    entries: Vec<ParamEntry>,
}

impl ParamRegistry {
    pub(crate) fn new(entries: Vec<ParamEntry>) -> Self {
        debug_assert!({
            let mut names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
            names.sort_unstable();
            names.windows(2).all(|w| w[0] != w[1])
        });
        ParamRegistry { entries }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(registry index, entry)` for every maskable group, in order.
    pub fn maskable(&self) -> impl Iterator<Item = (usize, &ParamEntry)> {
        self.entries.iter().enumerate().filter(|(_, e)| e.maskable)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn total_params(&self) -> usize {
        self.count_params(false)
    }

    pub fn count_params(&self, maskable_only: bool) -> usize {
        self.entries
            .iter()
            .filter(|e| !maskable_only || e.maskable)
            .map(ParamEntry::numel)
            .sum()
    }
}
