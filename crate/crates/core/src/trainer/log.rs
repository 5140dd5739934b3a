use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::Result;

/// Phase an epoch belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Dense,
    Lth,
    Warmup,
    Finetune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dense => "dense",
            Stage::Lth => "lth",
            Stage::Warmup => "warmup",
            Stage::Finetune => "finetune",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Summary of one training epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: Stage,
    /// Sample-weighted mean cross-entropy over the epoch.
    pub class_loss: f64,
    /// Mean group-lasso value over the epoch's batches (0 outside warm-up).
    pub penalty: f64,
    /// Euclidean norm of all masked-out weights at the end of the epoch
    /// (0 without a mask).
    pub wstar_norm: f64,
    pub train_acc: f64,
    /// Test accuracy at the end of the epoch, when it was evaluated.
    pub test_acc: Option<f64>,
    pub seconds: f64,
}

/// Per-epoch training records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,stage,class_loss,penalty,wstar_norm,train_acc,test_acc,seconds";

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Test accuracy of the most recent evaluated epoch.
    pub fn final_test_acc(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_acc)
    }

    /// Comma-separated rows under [`TrainLog::HEADER`]. Missing test
    /// accuracies are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            let test = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.epoch, r.stage, r.class_loss, r.penalty, r.wstar_norm, r.train_acc, test, r.seconds
            )
            .unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}
