//! Post-hoc ensembles: members at several sparsity levels or input
//! streams, averaged in probability space, with parameter accounting and
//! confidence analysis.

mod confidence;
mod predict;
mod spec;

pub use confidence::{confidence_report, ConfidenceReport, DEFAULT_THRESHOLD, HISTOGRAM_BINS};
pub use predict::{aggregate, assemble_predict, fuse_streams, member_proba, param_counts, param_fraction};
pub use spec::{Aggregation, EnsembleSpec, Member, MemberSpec};
