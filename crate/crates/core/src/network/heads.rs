use candle_core::{DType, Tensor, Var};
use ndarray::Array2;
use rand::Rng;

use super::multires::upsample_time;
use super::{argmax_rows, device, softmax_rows, tensor_to_array, DecoderFeatures, UpsampleMode, NUM_DECODER_LAYERS};
use crate::data::{LabelSequence, LabelSource};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// One linear map per decoder layer plus the ensemble weights.
#[derive(Debug, Clone)]
pub struct ClassifierHeads {
    /// `d_u x A` per layer.
    pub weights: Vec<Var>,
    /// `1 x A` per layer.
    pub biases: Vec<Var>,
    pub alpha: Vec<f64>,
    num_actions: usize,
}

impl ClassifierHeads {
    /// Uniform-bound initialization from the `init` stream at `path`.
    pub fn new(latent_dims: &[usize], num_actions: usize, alpha: Vec<f64>, seed: u64, path: &[u64], dtype: DType) -> Result<Self> {
        if latent_dims.len() != NUM_DECODER_LAYERS {
            return Err(Error::BadSpec(format!("need {NUM_DECODER_LAYERS} heads")));
        }
        check_alpha(&alpha)?;
        let mut r = rng::stream(seed, Stream::Init, path);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &d in latent_dims {
            let bound = 1.0 / (d as f64).sqrt();
            let w: Vec<f64> = (0..d * num_actions).map(|_| r.random_range(-bound..bound)).collect();
            let b: Vec<f64> = (0..num_actions).map(|_| r.random_range(-bound..bound)).collect();
            weights.push(Var::from_tensor(&Tensor::from_vec(w, (d, num_actions), &device())?.to_dtype(dtype)?)?);
            biases.push(Var::from_tensor(&Tensor::from_vec(b, (1, num_actions), &device())?.to_dtype(dtype)?)?);
        }
        Ok(Self {
            weights,
            biases,
            alpha,
            num_actions,
        })
    }

    pub fn uniform_alpha() -> Vec<f64> {
        vec![1.0 / NUM_DECODER_LAYERS as f64; NUM_DECODER_LAYERS]
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn vars(&self) -> Vec<Var> {
        self.weights.iter().chain(&self.biases).cloned().collect()
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for (u, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push((format!("heads.{u}.weight"), w.clone()));
            out.push((format!("heads.{u}.bias"), b.clone()));
        }
        out
    }

    /// Softmax class probabilities of every layer at its own resolution.
    pub fn layer_probabilities(&self, dec: &DecoderFeatures) -> Result<Vec<Tensor>> {
        dec.z
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(z, (w, b))| {
                let logits = z.matmul(w.as_tensor())?.broadcast_add(b.as_tensor())?;
                softmax_rows(&logits)
            })
            .collect()
    }
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.len() != NUM_DECODER_LAYERS || alpha.iter().any(|a| *a < 0.0 || !a.is_finite()) {
        return Err(Error::BadSpec(format!("ensemble weights {alpha:?} must be 6 non-negative values")));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadSpec(format!("ensemble weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Differentiable `target_len x A` ensemble: each layer's softmax is linearly
/// upsampled in time and mixed with weights `alpha`.
pub fn ensemble_probabilities(dec: &DecoderFeatures, heads: &ClassifierHeads, target_len: usize) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for (p, &a) in heads.layer_probabilities(dec)?.iter().zip(&heads.alpha) {
        if a == 0.0 {
            continue;
        }
        let up = upsample_time(p, target_len, UpsampleMode::Linear)?.affine(a, 0.0)?;
        acc = Some(match acc {
            None => up,
            Some(s) => (s + up)?,
        });
    }
    acc.ok_or_else(|| Error::BadSpec("all ensemble weights are zero".into()))
}

/// Ensemble probabilities and their argmax labels (ties to the smallest index).
pub fn predict_ensemble(dec: &DecoderFeatures, heads: &ClassifierHeads, target_len: usize) -> Result<(Array2<f32>, LabelSequence)> {
    let p = tensor_to_array(&ensemble_probabilities(dec, heads, target_len)?)?;
    let labels = argmax_rows(&p);
    Ok((p, LabelSequence::new("", labels, LabelSource::Pseudo)))
}
