use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training regime.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Ordinary training of every parameter.
    #[default]
    Dense,
    /// Learn a mask over frozen random weights.
    Lth,
    /// Fixed random mask: penalised dense warm-up, then masked fine-tuning.
    Generator,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Dense => "dense",
            TrainMode::Lth => "lth",
            TrainMode::Generator => "generator",
        }
    }

    /// Whether the mode produces a mask (and therefore uses a sparsity level).
    pub fn is_sparse(self) -> bool {
        self != TrainMode::Dense
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(TrainMode::Dense),
            "lth" => Ok(TrainMode::Lth),
            "generator" => Ok(TrainMode::Generator),
            other => Err(Error::Parameter(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Initial scores for mask learning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreInit {
    /// `|W0|`.
    #[default]
    Magnitude,
    /// `U[0, 1)` from the `mask` sub-seed.
    Uniform,
}

/// Optimisation settings shared by every mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// Epochs of penalised dense training before masked fine-tuning.
    /// Ignored outside generator mode.
    pub warmup_epochs: usize,
    /// Initial learning rate of the cosine schedule.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Weight of the group-lasso penalty during warm-up.
    pub lambda: f64,
    /// Fraction of maskable weights removed.
    pub sparsity: f64,
    /// Root seed; initialisation, mask and data order use derived sub-seeds.
    pub seed: u64,
    pub score_init: ScoreInit,
    /// Evaluate on the test split every this many epochs (0: final epoch only).
    pub eval_every: usize,
    /// Record wall-clock seconds in the log. Off by default so that logs of
    /// identical runs are byte-identical.
    pub log_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Dense,
            epochs: 100,
            warmup_epochs: 50,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
            lambda: 1.0,
            sparsity: 0.0,
            seed: 0,
            score_init: ScoreInit::Magnitude,
            eval_every: 1,
            log_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be positive".into()));
        }
        if self.mode == TrainMode::Generator && self.warmup_epochs > self.epochs {
            return Err(Error::Parameter(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Parameter(format!("sparsity {} outside [0, 1)", self.sparsity)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Parameter(format!("weight decay {} must be finite and non-negative", self.weight_decay)));
        }
        Ok(())
    }
}
