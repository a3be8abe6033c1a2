use std::ops::Range;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::{device, DecoderFeatures};
use crate::error::{Error, Result};

/// Added to every block norm so dead (all-zero) blocks stay finite.
pub const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleMode {
    #[default]
    Nearest,
    Linear,
}

/// Where the unit normalization happens relative to concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    /// Normalize each layer block, then concatenate (equal layer weights in cosine).
    #[default]
    BeforeConcat,
    /// Concatenate raw blocks, then normalize the whole vector.
    AfterConcat,
}

/// Per-frame concatenation of the upsampled, normalized decoder outputs.
#[derive(Debug, Clone)]
pub struct MultiResFeature {
    /// `T x d`.
    pub f: Tensor,
    /// Column range of each decoder layer's block.
    pub blocks: Vec<Range<usize>>,
    pub mode: UpsampleMode,
    pub order: NormOrder,
    /// Frames `[0, valid_len)` are real; the rest is padding.
    pub valid_len: usize,
}

impl MultiResFeature {
    pub fn len(&self) -> usize {
        self.f.dim(0).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.f.dim(1).unwrap_or(0)
    }

    /// Unpadded frames only.
    pub fn valid(&self) -> Result<Tensor> {
        Ok(self.f.narrow(0, 0, self.valid_len)?)
    }
}

/// Resample `z` (`L x d`) in time to `target_len` rows.
///
/// Nearest: row `t` copies source row `floor(t * L / target_len)`.
/// Linear: two-point interpolation at source position
/// `(t + 0.5) * L / target_len - 0.5`, clamped to the valid range.
pub fn upsample_time(z: &Tensor, target_len: usize, mode: UpsampleMode) -> Result<Tensor> {
    let len = z.dim(0)?;
    if len == 0 || target_len == 0 {
        return Err(Error::ShapeError(format!("cannot resample {len} frames to {target_len}")));
    }
    let dev = device();
    match mode {
        UpsampleMode::Nearest => {
            let idx: Vec<u32> = (0..target_len).map(|t| (t * len / target_len) as u32).collect();
            Ok(z.index_select(&Tensor::from_vec(idx, target_len, &dev)?, 0)?)
        }
        UpsampleMode::Linear => {
            let scale = len as f64 / target_len as f64;
            let mut i0 = Vec::with_capacity(target_len);
            let mut i1 = Vec::with_capacity(target_len);
            let mut w = Vec::with_capacity(target_len);
            for t in 0..target_len {
                let src = ((t as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(len - 1);
                let hi = (lo + 1).min(len - 1);
                i0.push(lo as u32);
                i1.push(hi as u32);
                w.push(if hi == lo { 0.0 } else { src - lo as f64 });
            }
            let a = z.index_select(&Tensor::from_vec(i0, target_len, &dev)?, 0)?;
            let b = z.index_select(&Tensor::from_vec(i1, target_len, &dev)?, 0)?;
            let w = Tensor::from_vec(w, (target_len, 1), &dev)?.to_dtype(z.dtype())?;
            let one_minus = w.affine(-1.0, 1.0)?;
            Ok((a.broadcast_mul(&one_minus)? + b.broadcast_mul(&w)?)?)
        }
    }
}

fn normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)?.sqrt()? + NORM_FLOOR)?;
    Ok(x.broadcast_div(&norm)?)
}

/// Multi-resolution feature with block normalization before concatenation.
pub fn multires_feature(dec: &DecoderFeatures, target_len: usize, mode: UpsampleMode) -> Result<MultiResFeature> {
    multires_feature_with(dec, target_len, mode, NormOrder::BeforeConcat)
}

pub fn multires_feature_with(
    dec: &DecoderFeatures,
    target_len: usize,
    mode: UpsampleMode,
    order: NormOrder,
) -> Result<MultiResFeature> {
    let mut parts = Vec::with_capacity(dec.z.len());
    let mut blocks = Vec::with_capacity(dec.z.len());
    let mut start = 0;
    for z in &dec.z {
        let up = upsample_time(z, target_len, mode)?;
        let d = up.dim(1)?;
        parts.push(match order {
            NormOrder::BeforeConcat => normalize_rows(&up)?,
            NormOrder::AfterConcat => up,
        });
        blocks.push(start..start + d);
        start += d;
    }
    let mut f = Tensor::cat(&parts, 1)?;
    if order == NormOrder::AfterConcat {
        f = normalize_rows(&f)?;
    }
    Ok(MultiResFeature {
        f,
        blocks,
        mode,
        order,
        valid_len: dec.valid_len.min(target_len),
    })
}

/// Video-level summary: max over the valid frames of each dimension.
pub fn video_summary(f: &MultiResFeature) -> Result<Tensor> {
    if f.valid_len == 0 {
        return Err(Error::ShapeError("video summary of an empty feature".into()));
    }
    Ok(f.valid()?.max(0)?)
}

/// Cosine similarity of two host vectors in `f64`.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn to_rows_f64(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}
