//! `STGW1` checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "STGW1"
//! u32 meta_len, meta_len bytes of TOML (CheckpointMeta)
//! u32 n_params
//!   n_params x { u16 name_len, name, u8 kind, u8 maskable, u8 ndim, ndim x u64 dim }
//! payloads: every parameter's f64 values, in manifest order
//! u32 n_buffers
//!   n_buffers x { u16 name_len, name, u64 channels, channels x f64 mean, channels x f64 var }
//! u8 has_mask
//!   if 1: f64 sparsity, u64 seed, u64 n_bits, ceil(n_bits / 8) bytes (LSB first)
//! ```
//!
//! Mask bits follow the payload order of the maskable parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::{ParamKind, ParamRegistry};
use super::{NetConfig, StgcnNetwork};
use crate::error::{Error, Result};
use crate::skeleton::Modality;
use crate::sparsity::MaskSet;

const MAGIC: &[u8; 5] = b"STGW1";

/// Descriptive header stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Input stream the network was trained on.
    #[serde(default)]
    pub modality: Modality,
    /// Free-form label such as `warmup` or `final`.
    #[serde(default)]
    pub stage: String,
    pub net: NetConfig,
}

/// A network, its provenance header, and an optional mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: StgcnNetwork,
    pub mask: Option<MaskSet>,
}

impl Checkpoint {
    pub fn new(net: StgcnNetwork, mask: Option<MaskSet>, modality: Modality, stage: &str) -> Result<Self> {
        if let Some(m) = &mask {
            m.validate(&net.registry())?;
        }
        Ok(Checkpoint {
            meta: CheckpointMeta {
                modality,
                stage: stage.to_string(),
                net: net.config().clone(),
            },
            net,
            mask,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
        put_u32(&mut out, meta.len())?;
        out.extend_from_slice(meta.as_bytes());

        let registry = self.net.registry();
        put_u32(&mut out, registry.len())?;
        for e in registry.entries() {
            put_name(&mut out, &e.name)?;
            out.push(e.kind.code());
            out.push(e.maskable as u8);
            let ndim = u8::try_from(e.shape.len()).map_err(|_| Error::Checkpoint("rank above 255".into()))?;
            out.push(ndim);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for p in self.net.params() {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }

        let buffers = self.net.buffers();
        put_u32(&mut out, buffers.len())?;
        for (name, stats) in buffers {
            put_name(&mut out, &name)?;
            out.extend_from_slice(&(stats.mean.len() as u64).to_le_bytes());
            for v in stats.mean.iter().chain(&stats.var) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }

        match &self.mask {
            None => out.push(0),
            Some(mask) => {
                out.push(1);
                out.extend_from_slice(&mask.sparsity().to_le_bytes());
                out.extend_from_slice(&mask.seed().to_le_bytes());
                out.extend_from_slice(&(mask.total() as u64).to_le_bytes());
                let mut byte = 0u8;
                for (i, bit) in mask.bits().enumerate() {
                    if bit {
                        byte |= 1 << (i % 8);
                    }
                    if i % 8 == 7 {
                        out.push(byte);
                        byte = 0;
                    }
                }
                if mask.total() % 8 != 0 {
                    out.push(byte);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("missing STGW1 header".into()));
        }
        let meta_len = r.u32()? as usize;
        let meta_text = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| Error::Checkpoint("meta is not UTF-8".into()))?;
        let meta: CheckpointMeta =
            toml::from_str(meta_text).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
        let mut net = StgcnNetwork::new(&meta.net, 0).map_err(|e| Error::Checkpoint(format!("meta: {e}")))?;
        let registry = net.registry();

        let n_params = r.u32()? as usize;
        if n_params != registry.len() {
            return Err(Error::Checkpoint(format!(
                "{n_params} parameters stored, architecture has {}",
                registry.len()
            )));
        }
        for e in registry.entries() {
            let name = r.name()?;
            let kind = ParamKind::from_code(r.u8()?)?;
            let maskable = r.u8()? != 0;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if name != e.name || kind != e.kind || maskable != e.maskable || shape != e.shape {
                return Err(Error::Checkpoint(format!(
                    "manifest entry {name} {kind} {shape:?} does not match {} {} {:?}",
                    e.name, e.kind, e.shape
                )));
            }
        }
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v = r.f64()?;
            }
        }

        let n_buffers = r.u32()? as usize;
        let names: Vec<String> = net.buffers().into_iter().map(|(n, _)| n).collect();
        if n_buffers != names.len() {
            return Err(Error::Checkpoint(format!(
                "{n_buffers} buffers stored, architecture has {}",
                names.len()
            )));
        }
        for (expected, stats) in names.iter().zip(net.buffers_mut()) {
            let name = r.name()?;
            let channels = r.u64()? as usize;
            if &name != expected || channels != stats.mean.len() {
                return Err(Error::Checkpoint(format!(
                    "buffer {name} with {channels} channels does not match {expected}"
                )));
            }
            for v in stats.mean.iter_mut().chain(stats.var.iter_mut()) {
                *v = r.f64()?;
            }
        }

        let mask = match r.u8()? {
            0 => None,
            1 => {
                let sparsity = r.f64()?;
                let seed = r.u64()?;
                let n_bits = r.u64()? as usize;
                let packed = r.take(n_bits.div_ceil(8))?;
                let bits: Vec<bool> = (0..n_bits).map(|i| packed[i / 8] >> (i % 8) & 1 == 1).collect();
                Some(MaskSet::from_bits(&registry, &bits, sparsity, seed).map_err(|e| Error::Checkpoint(e.to_string()))?)
            }
            other => return Err(Error::Checkpoint(format!("invalid mask flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { meta, net, mask })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    /// Loads and checks that the stored architecture equals `expected`.
    pub fn load_for(path: impl AsRef<Path>, expected: &NetConfig) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        if &ckpt.meta.net != expected {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch: stored {:?}, expected {:?}",
                ckpt.meta.net, expected
            )));
        }
        Ok(ckpt)
    }

    pub fn registry(&self) -> ParamRegistry {
        self.net.registry()
    }
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::Checkpoint(format!("count {n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn name(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
    }
}
