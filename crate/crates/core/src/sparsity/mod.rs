//! Binary masks over the convolution weights: exact-count binarization,
//! seeded random masks, masked views, reports, and mask learning over
//! frozen weights.

mod lth;
mod mask;

pub use lth::{lth_step, MaskScores};
pub use mask::{
    apply_mask, binarize, binarize_flat, random_mask, sparsity_report, zero_count, GroupReport, MaskEntry, MaskSet,
    SparsityReport,
};
