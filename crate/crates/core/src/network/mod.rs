//! Encoder-decoder temporal backbone, multi-resolution features, classifier
//! heads and the linear probe.

mod backbone;
pub mod checkpoint;
mod heads;
mod multires;
mod probe;

use candle_core::{DType, Device, Tensor};
use ndarray::Array2;

use crate::error::Result;

pub use backbone::{decoder_lengths, Backbone, BackboneConfig, DecoderFeatures, NUM_DECODER_LAYERS};
pub use checkpoint::Checkpoint;
pub use heads::{ensemble_probabilities, predict_ensemble, ClassifierHeads};
pub use multires::{
    cosine, multires_feature, multires_feature_with, upsample_time, video_summary, MultiResFeature, NormOrder, UpsampleMode,
    to_rows_f64, NORM_FLOOR,
};
pub use probe::{probe_train, LinearProbe, ProbeConfig};

pub(crate) fn device() -> Device {
    Device::Cpu
}

/// `T x F` host array to a 2-D tensor of `dtype`.
pub fn array_to_tensor(a: &Array2<f32>, dtype: DType) -> Result<Tensor> {
    let (r, c) = a.dim();
    let data: Vec<f32> = a.iter().copied().collect();
    Ok(Tensor::from_vec(data, (r, c), &device())?.to_dtype(dtype)?)
}

pub fn tensor_to_array(t: &Tensor) -> Result<Array2<f32>> {
    let (r, c) = t.dims2()?;
    let data = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(Array2::from_shape_vec((r, c), data).expect("shape matches"))
}

/// Row-wise argmax, ties to the smallest index.
pub fn argmax_rows(p: &Array2<f32>) -> Vec<usize> {
    p.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax with the row max detached for stability.
pub(crate) fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let m = logits.max_keepdim(1)?.detach();
    let e = logits.broadcast_sub(&m)?.exp()?;
    let s = e.sum_keepdim(1)?;
    Ok(e.broadcast_div(&s)?)
}

/// Row-wise log-softmax with the row max detached for stability.
pub(crate) fn log_softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let m = logits.max_keepdim(1)?.detach();
    let shifted = logits.broadcast_sub(&m)?;
    let lse = shifted.exp()?.sum_keepdim(1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}
