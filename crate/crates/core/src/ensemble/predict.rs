use super::spec::{Aggregation, Member};
use crate::error::{Error, Result};
use crate::skeleton::{Dataset, Modality, SkeletonGraph};
use crate::tensor::Tensor;
use crate::trainer::predict_proba;

/// Softmax probabilities `[n, C]` of one member on raw joint data. The
/// member's modality is derived from `raw` with the member's own skeleton.
pub fn member_proba(member: &Member, raw: &Dataset) -> Result<Tensor> {
    let net = &member.checkpoint.net;
    let data = if member.modality == Modality::J {
        raw.clone()
    } else {
        let graph = SkeletonGraph::from_parents(&net.config().parents)?;
        raw.to_modality(&graph, member.modality)
    };
    predict_proba(net, member.checkpoint.mask.as_ref(), &data)
}

/// Combines per-member probability tables with `rule`.
pub fn aggregate(tables: &[Tensor], weights: &[f64], rule: Aggregation) -> Result<Tensor> {
    let Some(first) = tables.first() else {
        return Err(Error::Usage("nothing to aggregate".into()));
    };
    for (i, t) in tables.iter().enumerate() {
        if t.shape() != first.shape() {
            return Err(Error::Spec(format!(
                "member {i} produced shape {:?}, member 0 produced {:?}",
                t.shape(),
                first.shape()
            )));
        }
    }
    let w: Vec<f64> = match rule {
        Aggregation::Mean => vec![1.0; tables.len()],
        Aggregation::WeightedMean => {
            if weights.len() != tables.len() {
                return Err(Error::Spec(format!("{} weights for {} members", weights.len(), tables.len())));
            }
            weights.to_vec()
        }
    };
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Spec("member weights sum to zero".into()));
    }
    let mut out = vec![0.0; first.numel()];
    for (t, &wi) in tables.iter().zip(&w) {
        for (o, p) in out.iter_mut().zip(t.data()) {
            *o += wi * p;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    Tensor::new(first.shape(), out)
}

fn check_classes(members: &[Member]) -> Result<usize> {
    let Some(first) = members.first() else {
        return Err(Error::Usage("ensemble has no members".into()));
    };
    let c = first.checkpoint.net.num_classes();
    for (i, m) in members.iter().enumerate() {
        if m.checkpoint.net.num_classes() != c {
            return Err(Error::Spec(format!(
                "member {i} predicts {} classes, member 0 predicts {c}",
                m.checkpoint.net.num_classes()
            )));
        }
    }
    Ok(c)
}

/// Aggregated class probabilities of all members on raw joint data,
/// together with each member's own table.
pub fn assemble_predict(members: &[Member], rule: Aggregation, raw: &Dataset) -> Result<(Tensor, Vec<Tensor>)> {
    check_classes(members)?;
    let tables = members
        .iter()
        .enumerate()
        .map(|(i, m)| member_proba(m, raw).map_err(|e| Error::Spec(format!("member {i}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = members.iter().map(|m| m.weight).collect();
    Ok((aggregate(&tables, &weights, rule)?, tables))
}

/// Multi-stream fusion: one member per requested modality, averaged.
pub fn fuse_streams(members: &[Member], streams: &[Modality], raw: &Dataset) -> Result<Tensor> {
    if streams.is_empty() {
        return Err(Error::Usage("no streams requested".into()));
    }
    let mut chosen = Vec::with_capacity(streams.len());
    for &s in streams {
        let m = members
            .iter()
            .find(|m| m.modality == s)
            .ok_or_else(|| Error::Spec(format!("no member for stream {s}")))?;
        chosen.push(m.clone());
    }
    Ok(assemble_predict(&chosen, Aggregation::Mean, raw)?.0)
}

/// `(sum over members of kept maskable weights, maskable weights per
/// member)`. Dense members count every weight. Members must share one
/// architecture.
pub fn param_counts(members: &[Member]) -> Result<(usize, usize)> {
    let Some(first) = members.first() else {
        return Err(Error::Usage("ensemble has no members".into()));
    };
    let registry = first.checkpoint.net.registry();
    let total = registry.count_params(true);
    let mut kept = 0usize;
    for (i, m) in members.iter().enumerate() {
        if m.checkpoint.net.registry() != registry {
            return Err(Error::Spec(format!("member {i} has a different architecture from member 0")));
        }
        kept += m.checkpoint.mask.as_ref().map_or(total, |mask| mask.kept());
    }
    Ok((kept, total))
}

/// Sum over members of the kept fraction of maskable weights, from mask
/// bit counts.
pub fn param_fraction(members: &[Member]) -> Result<f64> {
    let (kept, total) = param_counts(members)?;
    Ok(kept as f64 / total as f64)
}
