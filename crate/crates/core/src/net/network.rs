use std::sync::Arc;

use super::layers::{normal_tensor, BlockVars, StgcnBlock};
use super::registry::{ParamEntry, ParamKind, ParamRegistry};
use super::NetConfig;
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::skeleton::SkeletonGraph;
use crate::sparsity::MaskSet;
use crate::tensor::{BatchNormStats, Propagation, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How maskable weights enter the forward pass.
#[derive(Clone, Copy, Debug)]
pub enum WeightView<'a> {
    /// Weights as stored.
    Dense,
    /// `M ⊙ W` with exact zeros at masked entries.
    Masked(&'a MaskSet),
    /// `M ⊙ W` where `M` was binarized from `scores`; gradients reach the
    /// scores through the straight-through rule.
    Scored { scores: &'a [Tensor], mask: &'a MaskSet },
}

/// A recorded forward pass.
pub struct ForwardPass {
    pub tape: Tape,
    pub logits: Var,
    /// Leaf handle of every registry parameter, in registry order.
    pub params: Vec<Var>,
    /// Weights as consumed by the layers (masked where applicable), one per
    /// maskable group.
    pub effective: Vec<Var>,
    /// Score leaves in [`WeightView::Scored`] mode, one per maskable group.
    pub scores: Vec<Var>,
    bn_updates: Vec<Option<BatchNormStats>>,
}

/// Stacked ST-GCN blocks followed by mean pooling and a linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct StgcnNetwork {
    config: NetConfig,
    prop: Arc<Propagation>,
    pub blocks: Vec<StgcnBlock>,
    /// `[C_last, num_classes]`
    pub head_weight: Tensor,
    pub head_bias: Tensor,
}

impl StgcnNetwork {
    /// Builds a freshly initialised network. Convolution weights use
    /// He-normal initialisation; batch norm starts at identity.
    pub fn new(config: &NetConfig, seed: u64) -> Result<Self> {
        if config.channels.is_empty() || config.in_channels == 0 || config.channels.contains(&0) {
            return Err(Error::Parameter("network needs at least one block with positive widths".into()));
        }
        if config.temporal_half_window == 0 {
            return Err(Error::Parameter("temporal half window must be at least 1".into()));
        }
        if config.num_classes < 2 {
            return Err(Error::Parameter("need at least two classes".into()));
        }
        let graph = SkeletonGraph::from_parents(&config.parents)?;
        let prop = Arc::new(graph.propagation(config.adjacency));
        let mut rng = rng_from(seed);
        let mut blocks = Vec::with_capacity(config.channels.len());
        let mut c_in = config.in_channels;
        for &c_out in &config.channels {
            blocks.push(StgcnBlock::new(
                c_in,
                c_out,
                config.temporal_half_window,
                config.residual,
                &mut rng,
            ));
            c_in = c_out;
        }
        let bound = 1.0 / (c_in as f64).sqrt();
        let head_weight = normal_tensor(&[c_in, config.num_classes], bound, &mut rng);
        Ok(StgcnNetwork {
            config: config.clone(),
            prop,
            blocks,
            head_weight,
            head_bias: Tensor::zeros(&[config.num_classes]).with_grad(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn num_joints(&self) -> usize {
        self.prop.size()
    }

    pub fn registry(&self) -> ParamRegistry {
        let mut entries = Vec::new();
        let mut push = |name: String, kind: ParamKind, t: &Tensor| {
            entries.push(ParamEntry {
                name,
                kind,
                shape: t.shape().to_vec(),
                maskable: kind.maskable(),
            })
        };
        for (i, b) in self.blocks.iter().enumerate() {
            push(format!("blocks.{i}.sgcn.theta"), ParamKind::Theta, &b.sgcn.theta);
            push(format!("blocks.{i}.bn1.gamma"), ParamKind::Bn, &b.bn1.gamma);
            push(format!("blocks.{i}.bn1.beta"), ParamKind::Bn, &b.bn1.beta);
            push(format!("blocks.{i}.tgcn.omega"), ParamKind::Omega, &b.tgcn.omega);
            push(format!("blocks.{i}.bn2.gamma"), ParamKind::Bn, &b.bn2.gamma);
            push(format!("blocks.{i}.bn2.beta"), ParamKind::Bn, &b.bn2.beta);
        }
        push("head.weight".into(), ParamKind::Head, &self.head_weight);
        push("head.bias".into(), ParamKind::Head, &self.head_bias);
        ParamRegistry::new(entries)
    }

    /// Parameters in registry order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(self.blocks.len() * 6 + 2);
        for b in &self.blocks {
            out.extend([
                &b.sgcn.theta,
                &b.bn1.gamma,
                &b.bn1.beta,
                &b.tgcn.omega,
                &b.bn2.gamma,
                &b.bn2.beta,
            ]);
        }
        out.extend([&self.head_weight, &self.head_bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.blocks.len() * 6 + 2);
        for b in &mut self.blocks {
            out.extend([
                &mut b.sgcn.theta,
                &mut b.bn1.gamma,
                &mut b.bn1.beta,
                &mut b.tgcn.omega,
                &mut b.bn2.gamma,
                &mut b.bn2.beta,
            ]);
        }
        out.extend([&mut self.head_weight, &mut self.head_bias]);
        out
    }

    /// Running batch-norm statistics, named, in block order.
    pub fn buffers(&self) -> Vec<(String, &BatchNormStats)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| [(format!("blocks.{i}.bn1"), &b.bn1.stats), (format!("blocks.{i}.bn2"), &b.bn2.stats)])
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut BatchNormStats> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.bn1.stats, &mut b.bn2.stats])
            .collect()
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        for p in self.params_mut() {
            p.requires_grad = on;
        }
    }

    /// Records the network on `tape` for an input already on it.
    ///
    /// Running statistics are not touched; the updates computed in train
    /// mode are returned in the pass.
    pub fn forward_on(&self, mut tape: Tape, input: Var, mode: Mode, view: WeightView<'_>) -> Result<ForwardPass> {
        let shape = tape.shape(input).to_vec();
        if shape.len() != 4 || shape[1] != self.config.in_channels || shape[3] != self.num_joints() {
            return Err(Error::dim(
                "network input",
                &shape,
                &[0, self.config.in_channels, 0, self.num_joints()],
            ));
        }
        let train = mode == Mode::Train;
        let registry = self.registry();
        let (mask, scores) = match view {
            WeightView::Dense => (None, None),
            WeightView::Masked(m) => (Some(m), None),
            WeightView::Scored { scores, mask } => (Some(mask), Some(scores)),
        };
        if let Some(m) = mask {
            m.validate(&registry)?;
        }
        if let Some(s) = scores {
            if s.len() != m_groups(&registry) {
                return Err(Error::Mask(format!(
                    "{} score tensors for {} maskable groups",
                    s.len(),
                    m_groups(&registry)
                )));
            }
        }

        let params: Vec<Var> = self.params().into_iter().map(|p| tape.leaf(p)).collect();
        let mut effective = Vec::new();
        let mut score_vars = Vec::new();
        let mut used = params.clone();
        for (group, (idx, _)) in registry.maskable().enumerate() {
            let v = match (mask, scores) {
                (Some(m), Some(s)) => {
                    let sv = tape.leaf(&s[group]);
                    score_vars.push(sv);
                    tape.straight_through(params[idx], sv, m.keep(group).clone())?
                }
                (Some(m), None) => tape.select(params[idx], m.keep(group).clone())?,
                _ => params[idx],
            };
            used[idx] = v;
            effective.push(v);
        }

        let mut h = input;
        let mut bn_updates = Vec::with_capacity(self.blocks.len() * 2);
        for (i, block) in self.blocks.iter().enumerate() {
            let base = i * 6;
            let vars = BlockVars {
                theta: used[base],
                bn1: (used[base + 1], used[base + 2]),
                omega: used[base + 3],
                bn2: (used[base + 4], used[base + 5]),
            };
            let (out, stats) = block.forward(&mut tape, h, &vars, &self.prop, train)?;
            bn_updates.extend(stats);
            h = out;
        }
        let pooled = tape.mean_pool(h)?;
        let n = used.len();
        let z = tape.matmul(pooled, used[n - 2])?;
        let logits = tape.add_row_bias(z, used[n - 1])?;
        Ok(ForwardPass {
            tape,
            logits,
            params,
            effective,
            scores: score_vars,
            bn_updates,
        })
    }

    /// Forward pass on `input = [B, C_in, T, N]`. In train mode the running
    /// batch-norm statistics are updated.
    pub fn forward(&mut self, input: &Tensor, mode: Mode, view: WeightView<'_>) -> Result<ForwardPass> {
        let mut tape = Tape::new();
        let x = tape.leaf(input);
        let mut pass = self.forward_on(tape, x, mode, view)?;
        self.commit(&mut pass);
        Ok(pass)
    }

    /// Eval-mode logits `[B, num_classes]`.
    pub fn infer(&self, input: &Tensor, view: WeightView<'_>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.shape(), input.data().to_vec())?;
        let pass = self.forward_on(tape, x, Mode::Eval, view)?;
        Ok(pass.tape.tensor(pass.logits))
    }

    fn commit(&mut self, pass: &mut ForwardPass) {
        let updates = std::mem::take(&mut pass.bn_updates);
        for (slot, update) in self.buffers_mut().into_iter().zip(updates) {
            if let Some(stats) = update {
                *slot = stats;
            }
        }
    }

    /// Overwrites masked entries of every maskable group with `+0.0`.
    pub fn zero_masked(&mut self, mask: &MaskSet) -> Result<()> {
        let registry = self.registry();
        mask.validate(&registry)?;
        let groups: Vec<usize> = registry.maskable().map(|(i, _)| i).collect();
        let mut params = self.params_mut();
        for (g, &idx) in groups.iter().enumerate() {
            for (w, &k) in params[idx].data_mut().iter_mut().zip(mask.keep(g).iter()) {
                if !k {
                    *w = 0.0;
                }
            }
        }
        Ok(())
    }
}

fn m_groups(registry: &ParamRegistry) -> usize {
    registry.maskable().count()
}
