use candle_core::{DType, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_rows, array_to_tensor, device, log_softmax_rows, tensor_to_array};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 1e-4,
            epochs: 300,
            seed: 0,
        }
    }
}

/// Single affine map from a representation to action logits.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    /// `d x A`.
    pub weight: Var,
    /// `1 x A`.
    pub bias: Var,
}

impl LinearProbe {
    pub fn new(dim: usize, num_actions: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, Stream::Init, &[u64::MAX]);
        let bound = 1.0 / (dim as f64).sqrt();
        let w: Vec<f32> = (0..dim * num_actions).map(|_| r.random_range(-bound..bound) as f32).collect();
        Ok(Self {
            weight: Var::from_tensor(&Tensor::from_vec(w, (dim, num_actions), &device())?)?,
            bias: Var::from_tensor(&Tensor::zeros((1, num_actions), DType::F32, &device())?)?,
        })
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(self.weight.as_tensor())?.broadcast_add(self.bias.as_tensor())?)
    }

    pub fn predict(&self, features: ArrayView2<f32>) -> Result<Vec<usize>> {
        let x = array_to_tensor(&features.to_owned(), DType::F32)?;
        Ok(argmax_rows(&tensor_to_array(&self.logits(&x)?)?))
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        vec![("probe.weight".into(), self.weight.clone()), ("probe.bias".into(), self.bias.clone())]
    }

    pub fn snapshot(&self) -> Result<(Vec<f32>, Vec<f32>)> {
        Ok((
            self.weight.as_tensor().flatten_all()?.to_vec1()?,
            self.bias.as_tensor().flatten_all()?.to_vec1()?,
        ))
    }
}

/// Full-batch softmax regression on frozen per-frame representations.
pub fn probe_train(features: &[Array2<f32>], labels: &[Vec<usize>], num_actions: usize, config: &ProbeConfig) -> Result<LinearProbe> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "probe training videos".into(),
            expected: features.len(),
            actual: labels.len(),
        });
    }
    for (f, l) in features.iter().zip(labels) {
        if f.nrows() != l.len() {
            return Err(Error::LengthMismatch {
                what: "probe labels".into(),
                expected: f.nrows(),
                actual: l.len(),
            });
        }
    }
    let views: Vec<_> = features.iter().map(|f| f.view()).collect();
    let x = concatenate(Axis(0), &views).map_err(|e| Error::ShapeError(e.to_string()))?;
    let y: Vec<u32> = labels.iter().flatten().map(|&l| l as u32).collect();
    if y.iter().any(|&l| l as usize >= num_actions) {
        return Err(Error::BadSpec("probe label out of range".into()));
    }
    let n = y.len();
    let x = array_to_tensor(&x, DType::F32)?;
    let y = Tensor::from_vec(y, (n, 1), &device())?;

    let probe = LinearProbe::new(x.dim(1)?, num_actions, config.seed)?;
    let mut opt = AdamW::new(
        vec![probe.weight.clone(), probe.bias.clone()],
        ParamsAdamW {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..ParamsAdamW::default()
        },
    )?;
    for _ in 0..config.epochs {
        let logp = log_softmax_rows(&probe.logits(&x)?)?;
        let loss = logp.gather(&y, 1)?.mean_all()?.neg()?;
        opt.backward_step(&loss)?;
    }
    Ok(probe)
}
