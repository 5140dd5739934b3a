use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{ParamRegistry, WeightView};
use crate::rng::rng_from;
use crate::tensor::Tensor;

/// Binary mask for one maskable parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskEntry {
    pub name: String,
    pub shape: Vec<usize>,
    keep: Arc<[bool]>,
}

impl MaskEntry {
    pub fn keep(&self) -> &Arc<[bool]> {
        &self.keep
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }
}

/// Binary masks over every maskable group of a registry, in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    entries: Vec<MaskEntry>,
    sparsity: f64,
    seed: u64,
}

impl MaskSet {
    /// Splits a flat keep vector (concatenated in registry order) into groups.
    pub fn from_bits(registry: &ParamRegistry, bits: &[bool], sparsity: f64, seed: u64) -> Result<Self> {
        let total = registry.count_params(true);
        if bits.len() != total {
            return Err(Error::Mask(format!(
                "{} mask bits for {total} maskable parameters",
                bits.len()
            )));
        }
        let mut offset = 0;
        let entries = registry
            .maskable()
            .map(|(_, e)| {
                let n = e.numel();
                let keep: Arc<[bool]> = Arc::from(&bits[offset..offset + n]);
                offset += n;
                MaskEntry {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    keep,
                }
            })
            .collect();
        Ok(MaskSet {
            entries,
            sparsity,
            seed,
        })
    }

    pub fn all_ones(registry: &ParamRegistry) -> Self {
        let bits = vec![true; registry.count_params(true)];
        MaskSet::from_bits(registry, &bits, 0.0, 0).expect("sizes agree")
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    /// Keep flags of the `group`-th maskable group.
    pub fn keep(&self, group: usize) -> &Arc<[bool]> {
        &self.entries[group].keep
    }

    /// Flags of the entries that are masked out (the complement).
    pub fn dropped(&self, group: usize) -> Arc<[bool]> {
        self.entries[group].keep.iter().map(|k| !k).collect()
    }

    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(MaskEntry::len).sum()
    }

    pub fn kept(&self) -> usize {
        self.entries.iter().map(MaskEntry::kept).sum()
    }

    /// All keep flags concatenated in registry order.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.entries.iter().flat_map(|e| e.keep.iter().copied())
    }

    /// Checks that the mask covers exactly the registry's maskable groups.
    pub fn validate(&self, registry: &ParamRegistry) -> Result<()> {
        let groups: Vec<_> = registry.maskable().map(|(_, e)| e).collect();
        if groups.len() != self.entries.len() {
            return Err(Error::Mask(format!(
                "mask has {} groups, registry has {} maskable groups",
                self.entries.len(),
                groups.len()
            )));
        }
        for (m, e) in self.entries.iter().zip(groups) {
            if m.name != e.name || m.shape != e.shape {
                return Err(Error::Mask(format!(
                    "mask group {} {:?} does not match parameter {} {:?}",
                    m.name, m.shape, e.name, e.shape
                )));
            }
        }
        Ok(())
    }
}

/// Number of entries zeroed at sparsity `s` out of `n`.
pub fn zero_count(sparsity: f64, n: usize) -> usize {
    ((sparsity * n as f64).round() as usize).min(n)
}

fn check_sparsity(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sparsity {s} outside [0, 1]")))
    }
}

/// Keep flags for a flat score vector: the `round(S * n)` smallest scores
/// are dropped, ties resolved by ascending position.
pub fn binarize_flat(scores: &[f64], sparsity: f64) -> Result<Vec<bool>> {
    check_sparsity(sparsity)?;
    let n = scores.len();
    let zeros = zero_count(sparsity, n);
    let mut keep = vec![true; n];
    if zeros == 0 {
        return Ok(keep);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let by_score = |a: &usize, b: &usize| -> Ordering { scores[*a].total_cmp(&scores[*b]).then(a.cmp(b)) };
    if zeros < n {
        order.select_nth_unstable_by(zeros - 1, by_score);
    }
    for &i in &order[..zeros] {
        keep[i] = false;
    }
    Ok(keep)
}

/// Global binarization over the concatenated scores of every maskable group.
pub fn binarize(registry: &ParamRegistry, scores: &[Tensor], sparsity: f64) -> Result<MaskSet> {
    binarize_seeded(registry, scores, sparsity, 0)
}

fn binarize_seeded(registry: &ParamRegistry, scores: &[Tensor], sparsity: f64, seed: u64) -> Result<MaskSet> {
    let groups: Vec<_> = registry.maskable().map(|(_, e)| e).collect();
    if scores.len() != groups.len() {
        return Err(Error::Mask(format!(
            "{} score tensors for {} maskable groups",
            scores.len(),
            groups.len()
        )));
    }
    let mut flat = Vec::with_capacity(registry.count_params(true));
    for (s, e) in scores.iter().zip(&groups) {
        if s.shape() != e.shape.as_slice() {
            return Err(Error::dim("binarize", s.shape(), &e.shape));
        }
        flat.extend_from_slice(s.data());
    }
    let bits = binarize_flat(&flat, sparsity)?;
    MaskSet::from_bits(registry, &bits, sparsity, seed)
}

/// Random mask with exactly `round(S * n)` zeros, drawn from i.i.d.
/// uniform scores of the `ChaCha8` stream seeded by `seed`.
pub fn random_mask(registry: &ParamRegistry, sparsity: f64, seed: u64) -> Result<MaskSet> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::Parameter(format!("sparsity {sparsity} outside [0, 1)")));
    }
    let mut rng = rng_from(seed);
    let scores: Vec<Tensor> = registry
        .maskable()
        .map(|(_, e)| {
            let data = (0..e.numel()).map(|_| rng.random::<f64>()).collect();
            Tensor::new(&e.shape, data).expect("registry shape")
        })
        .collect();
    binarize_seeded(registry, &scores, sparsity, seed)
}

/// Validates `mask` against the registry and returns the masked weight view.
pub fn apply_mask<'a>(registry: &ParamRegistry, mask: &'a MaskSet) -> Result<WeightView<'a>> {
    mask.validate(registry)?;
    Ok(WeightView::Masked(mask))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub kept: usize,
    pub total: usize,
}

impl GroupReport {
    pub fn fraction(&self) -> f64 {
        self.kept as f64 / self.total as f64
    }
}

/// Kept counts per maskable group and overall.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    pub groups: Vec<GroupReport>,
    pub kept: usize,
    pub total: usize,
}

impl SparsityReport {
    pub fn kept_fraction(&self) -> f64 {
        self.kept as f64 / self.total as f64
    }

    /// One line per group, then a `total` line:
    /// `name kept total fraction`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            writeln!(out, "{} {} {} {:.6}", g.name, g.kept, g.total, g.fraction()).unwrap();
        }
        writeln!(out, "total {} {} {:.6}", self.kept, self.total, self.kept_fraction()).unwrap();
        out
    }
}

pub fn sparsity_report(mask: &MaskSet, registry: &ParamRegistry) -> Result<SparsityReport> {
    mask.validate(registry)?;
    let groups: Vec<GroupReport> = mask
        .entries()
        .iter()
        .map(|e| GroupReport {
            name: e.name.clone(),
            kept: e.kept(),
            total: e.len(),
        })
        .collect();
    Ok(SparsityReport {
        kept: groups.iter().map(|g| g.kept).sum(),
        total: groups.iter().map(|g| g.total).sum(),
        groups,
    })
}
