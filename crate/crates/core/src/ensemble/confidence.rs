use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Number of uniform histogram bins over `[0, 1]`.
pub const HISTOGRAM_BINS: usize = 20;
/// Default confidence threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Distribution of per-sample maximum class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceReport {
    pub sample_ids: Vec<u64>,
    pub max_probs: Vec<f64>,
    pub threshold: f64,
    /// Counts per bin; bin `i` covers `[i / 20, (i + 1) / 20)`, the last
    /// bin also holds 1.0.
    pub histogram: [usize; HISTOGRAM_BINS],
    pub below: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl ConfidenceReport {
    pub fn len(&self) -> usize {
        self.max_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.max_probs.is_empty()
    }

    pub fn below_fraction(&self) -> f64 {
        self.below as f64 / self.len() as f64
    }

    /// `sample_id,max_prob,below_threshold` rows followed by a summary
    /// block of `# key,value` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,max_prob,below_threshold\n");
        for (id, p) in self.sample_ids.iter().zip(&self.max_probs) {
            writeln!(out, "{id},{p},{}", u8::from(*p < self.threshold)).unwrap();
        }
        out.push_str(&self.summary());
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# samples,{}", self.len()).unwrap();
        writeln!(out, "# threshold,{}", self.threshold).unwrap();
        writeln!(out, "# below,{}", self.below).unwrap();
        writeln!(out, "# below_fraction,{}", self.below_fraction()).unwrap();
        writeln!(out, "# mean,{}", self.mean).unwrap();
        writeln!(out, "# q1,{}", self.q1).unwrap();
        writeln!(out, "# median,{}", self.median).unwrap();
        writeln!(out, "# q3,{}", self.q3).unwrap();
        let bins: Vec<String> = self.histogram.iter().map(usize::to_string).collect();
        writeln!(out, "# histogram,{}", bins.join(",")).unwrap();
        out
    }
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Builds the report from a `[n, C]` probability table. Every row must be
/// non-negative and sum to 1 within `1e-6`.
pub fn confidence_report(probs: &Tensor, sample_ids: &[u64], threshold: f64) -> Result<ConfidenceReport> {
    if probs.shape().len() != 2 || probs.shape()[0] == 0 {
        return Err(Error::Input(format!("expected a non-empty [n, C] table, got {:?}", probs.shape())));
    }
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    if sample_ids.len() != n {
        return Err(Error::Input(format!("{} sample ids for {n} rows", sample_ids.len())));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Parameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut max_probs = Vec::with_capacity(n);
    for (r, row) in probs.data().chunks(c).enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Input(format!("row {r} is not a probability vector (sum {sum})")));
        }
        max_probs.push(row.iter().copied().fold(0.0, f64::max));
    }
    let mut histogram = [0usize; HISTOGRAM_BINS];
    for &p in &max_probs {
        let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        histogram[bin] += 1;
    }
    let mut sorted = max_probs.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ConfidenceReport {
        sample_ids: sample_ids.to_vec(),
        below: max_probs.iter().filter(|&&p| p < threshold).count(),
        mean: max_probs.iter().sum::<f64>() / n as f64,
        median: quantile(&sorted, 0.5),
        q1: quantile(&sorted, 0.25),
        q3: quantile(&sorted, 0.75),
        max_probs,
        threshold,
        histogram,
    })
}
