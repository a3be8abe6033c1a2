//! Self-describing binary container for model state.
//!
//! Layout: 8-byte magic, `u64` little-endian header length, a JSON header,
//! then every tensor as little-endian `f32` in header order.

use std::path::Path;

use candle_core::{DType, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{device, Backbone, BackboneConfig, ClassifierHeads, LinearProbe};
use crate::data::io::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ICCCKPT\0";
pub const FORMAT: &str = "icc-seg/ckpt/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadsMeta {
    pub num_actions: usize,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub dim: usize,
    pub num_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    backbone: BackboneConfig,
    seed: u64,
    lineage: Vec<String>,
    heads: Option<HeadsMeta>,
    probe: Option<ProbeMeta>,
    extra: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub backbone: BackboneConfig,
    /// Root seed of the run that produced this state.
    pub seed: u64,
    /// Named random streams consumed so far, for provenance.
    pub lineage: Vec<String>,
    pub heads: Option<HeadsMeta>,
    pub probe: Option<ProbeMeta>,
    /// Caller-defined state (label store, history, progress).
    pub extra: serde_json::Value,
    pub tensors: Vec<(TensorEntry, Vec<f32>)>,
}

fn capture_vars(vars: Vec<(String, Var)>, out: &mut Vec<(TensorEntry, Vec<f32>)>) -> Result<()> {
    for (name, v) in vars {
        let t = v.as_tensor();
        let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        out.push((
            TensorEntry {
                name,
                shape: t.dims().to_vec(),
            },
            data,
        ));
    }
    Ok(())
}

impl Checkpoint {
    pub fn capture(
        backbone: &Backbone,
        heads: Option<&ClassifierHeads>,
        probe: Option<&LinearProbe>,
        seed: u64,
        lineage: Vec<String>,
        extra: serde_json::Value,
    ) -> Result<Self> {
        let mut tensors = Vec::new();
        capture_vars(backbone.named_vars(), &mut tensors)?;
        if let Some(h) = heads {
            capture_vars(h.named_vars(), &mut tensors)?;
        }
        if let Some(p) = probe {
            capture_vars(p.named_vars(), &mut tensors)?;
        }
        Ok(Self {
            backbone: backbone.config().clone(),
            seed,
            lineage,
            heads: heads.map(|h| HeadsMeta {
                num_actions: h.num_actions(),
                alpha: h.alpha.clone(),
            }),
            probe: probe.map(|p| {
                let (d, a) = p.weight.as_tensor().dims2().unwrap_or((0, 0));
                ProbeMeta { dim: d, num_actions: a }
            }),
            extra,
            tensors,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: FORMAT.into(),
            backbone: self.backbone.clone(),
            seed: self.seed,
            lineage: self.lineage.clone(),
            heads: self.heads.clone(),
            probe: self.probe.clone(),
            extra: self.extra.clone(),
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.tensors.iter().map(|(_, d)| d.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, data) in &self.tensors {
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedFile {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let value: serde_json::Value = serde_json::from_slice(json)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("").to_string();
        if found != FORMAT {
            return Err(Error::CheckpointVersionMismatch {
                expected: FORMAT.into(),
                found,
            });
        }
        let header: Header = serde_json::from_value(value)?;
        let mut payload = &bytes[16 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            if payload.len() < 4 * n {
                return Err(bad("truncated payload"));
            }
            let data = payload[..4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            payload = &payload[4 * n..];
            tensors.push((entry, data));
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            backbone: header.backbone,
            seed: header.seed,
            lineage: header.lineage,
            heads: header.heads,
            probe: header.probe,
            extra: header.extra,
            tensors,
        })
    }

    /// Written to a temporary sibling and renamed into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn assign(&self, vars: Vec<(String, Var)>) -> Result<()> {
        for (name, var) in vars {
            let (entry, data) = self
                .tensors
                .iter()
                .find(|(e, _)| e.name == name)
                .ok_or_else(|| Error::BadSpec(format!("checkpoint has no tensor {name}")))?;
            if entry.shape != var.as_tensor().dims() {
                return Err(Error::ShapeError(format!("{name}: checkpoint shape {:?} vs {:?}", entry.shape, var.as_tensor().dims())));
            }
            let t = Tensor::from_vec(data.clone(), entry.shape.clone(), &device())?.to_dtype(var.as_tensor().dtype())?;
            var.set(&t)?;
        }
        Ok(())
    }

    pub fn restore_backbone(&self, dtype: DType) -> Result<Backbone> {
        let b = Backbone::new(self.backbone.clone(), 0, dtype)?;
        self.assign(b.named_vars())?;
        Ok(b)
    }

    pub fn restore_heads(&self, dtype: DType) -> Result<Option<ClassifierHeads>> {
        let Some(meta) = &self.heads else { return Ok(None) };
        let h = ClassifierHeads::new(&self.backbone.latent_dim_per_layer, meta.num_actions, meta.alpha.clone(), 0, &[], dtype)?;
        self.assign(h.named_vars())?;
        Ok(Some(h))
    }

    pub fn restore_probe(&self) -> Result<Option<LinearProbe>> {
        let Some(meta) = &self.probe else { return Ok(None) };
        let p = LinearProbe::new(meta.dim, meta.num_actions, 0)?;
        self.assign(p.named_vars())?;
        Ok(Some(p))
    }
}
