use candle_core::{DType, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{array_to_tensor, device};
use crate::data::FeatureSequence;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const NUM_DECODER_LAYERS: usize = 6;
/// Five halvings between the input and the bottleneck.
pub const MIN_LEN: usize = 1 << (NUM_DECODER_LAYERS - 1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_dim: usize,
    pub num_decoder_layers: usize,
    /// Width of every encoder stage.
    pub base_channels: usize,
    /// Output width `d_u` of decoder layers 1 (coarsest) to 6 (finest).
    pub latent_dim_per_layer: Vec<usize>,
    pub conv_kernel: usize,
}

impl BackboneConfig {
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            num_decoder_layers: NUM_DECODER_LAYERS,
            base_channels: 64,
            latent_dim_per_layer: vec![32, 32, 64, 64, 128, 128],
            conv_kernel: 3,
        }
    }

    /// Sized to about 4.07M trainable parameters on 2048-d inputs.
    pub fn full_scale(input_dim: usize) -> Self {
        Self {
            input_dim,
            num_decoder_layers: NUM_DECODER_LAYERS,
            base_channels: 256,
            latent_dim_per_layer: vec![256, 256, 256, 128, 128, 128],
            conv_kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_decoder_layers != NUM_DECODER_LAYERS {
            return Err(Error::BadSpec(format!(
                "the decoder has exactly {NUM_DECODER_LAYERS} layers, got {}",
                self.num_decoder_layers
            )));
        }
        if self.latent_dim_per_layer.len() != NUM_DECODER_LAYERS {
            return Err(Error::BadSpec(format!(
                "need {NUM_DECODER_LAYERS} latent dims, got {}",
                self.latent_dim_per_layer.len()
            )));
        }
        if self.input_dim == 0 || self.base_channels == 0 || self.latent_dim_per_layer.contains(&0) {
            return Err(Error::BadSpec("zero-width layer".into()));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::BadSpec(format!("conv kernel {} must be odd", self.conv_kernel)));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.latent_dim_per_layer.iter().sum()
    }

    /// `(in, out)` channels of the 6 encoder and 6 decoder convolutions.
    fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let b = self.base_channels;
        let d = &self.latent_dim_per_layer;
        let mut shapes = vec![(self.input_dim, b)];
        shapes.extend(std::iter::repeat_n((b, b), NUM_DECODER_LAYERS - 1));
        shapes.push((b, d[0]));
        for u in 1..NUM_DECODER_LAYERS {
            shapes.push((d[u - 1] + b, d[u]));
        }
        shapes
    }

    pub fn num_parameters(&self) -> usize {
        self.conv_shapes()
            .iter()
            .map(|&(i, o)| i * o * self.conv_kernel + 3 * o)
            .sum()
    }
}

/// Temporal length of each decoder output for an input of `t` frames.
pub fn decoder_lengths(t: usize) -> [usize; NUM_DECODER_LAYERS] {
    let mut out = [0; NUM_DECODER_LAYERS];
    let mut len = t;
    for u in (0..NUM_DECODER_LAYERS).rev() {
        out[u] = len;
        len = len.div_ceil(2);
    }
    out
}

/// conv -> channel layer norm -> ReLU.
#[derive(Debug, Clone)]
struct ConvBlock {
    weight: Var,
    bias: Var,
    gamma: Var,
    beta: Var,
}

impl ConvBlock {
    fn new<R: Rng>(cin: usize, cout: usize, k: usize, dtype: DType, r: &mut R) -> Result<Self> {
        let bound = 1.0 / ((cin * k) as f64).sqrt();
        let w: Vec<f64> = (0..cout * cin * k).map(|_| r.random_range(-bound..bound)).collect();
        let b: Vec<f64> = (0..cout).map(|_| r.random_range(-bound..bound)).collect();
        let dev = device();
        Ok(Self {
            weight: Var::from_tensor(&Tensor::from_vec(w, (cout, cin, k), &dev)?.to_dtype(dtype)?)?,
            bias: Var::from_tensor(&Tensor::from_vec(b, (1, cout, 1), &dev)?.to_dtype(dtype)?)?,
            gamma: Var::from_tensor(&Tensor::ones((1, cout, 1), dtype, &dev)?)?,
            beta: Var::from_tensor(&Tensor::zeros((1, cout, 1), dtype, &dev)?)?,
        })
    }

    /// `x`: `(1, C_in, L)` -> `(1, C_out, L)`.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv1d_same(x, self.weight.as_tensor())?;
        let y = y.broadcast_add(self.bias.as_tensor())?;
        let mean = y.mean_keepdim(1)?;
        let centered = y.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let y = centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?;
        let y = y.broadcast_mul(self.gamma.as_tensor())?.broadcast_add(self.beta.as_tensor())?;
        Ok(y.relu()?)
    }

    fn vars(&self) -> [&Var; 4] {
        [&self.weight, &self.bias, &self.gamma, &self.beta]
    }
}

/// Zero-padded "same" convolution written as one matrix product over shifted
/// copies of the input. Unlike the built-in kernel its backward pass is
/// defined for every input length, including 1 and 2.
fn conv1d_same(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (b, cin, l) = x.dims3()?;
    let (cout, _, k) = w.dims3()?;
    let xp = x.pad_with_zeros(2, k / 2, k - 1 - k / 2)?;
    let shifted = (0..k).map(|j| xp.narrow(2, j, l)).collect::<candle_core::Result<Vec<_>>>()?;
    // (b, cin, k, l) -> (b, cin * k, l), channel-major to match the weight layout
    let cols = Tensor::stack(&shifted, 2)?.reshape((b, cin * k, l))?;
    let w2 = w.reshape((cout, cin * k))?.unsqueeze(0)?.broadcast_as((b, cout, cin * k))?;
    Ok(w2.matmul(&cols)?)
}

/// Halve the temporal length by max-pooling pairs; odd lengths repeat the last frame.
fn pool2(x: &Tensor) -> Result<Tensor> {
    let (b, c, l) = x.dims3()?;
    let x = if l % 2 == 1 { x.pad_with_same(2, 0, 1)? } else { x.clone() };
    let l2 = x.dim(2)? / 2;
    Ok(x.reshape((b, c, l2, 2))?.max(3)?)
}

/// Nearest x2 upsampling cropped to `target`.
fn up2(x: &Tensor, target: usize) -> Result<Tensor> {
    let idx: Vec<u32> = (0..target).map(|i| (i / 2) as u32).collect();
    let idx = Tensor::from_vec(idx, target, &device())?;
    Ok(x.index_select(&idx, 2)?)
}

/// Per-layer decoder outputs `z_1 .. z_6`, each `L_u x d_u`.
#[derive(Debug, Clone)]
pub struct DecoderFeatures {
    pub z: Vec<Tensor>,
    /// Unpadded input length.
    pub valid_len: usize,
    /// Length of `z_6` (input length after padding).
    pub padded_len: usize,
}

impl DecoderFeatures {
    pub fn lengths(&self) -> Vec<usize> {
        self.z.iter().map(|z| z.dim(0).unwrap_or(0)).collect()
    }
}

/// U-Net shaped temporal convolution network.
#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    dtype: DType,
    encoder: Vec<ConvBlock>,
    decoder: Vec<ConvBlock>,
}

impl Backbone {
    /// Weights drawn from the `init` stream of `seed`.
    pub fn new(config: BackboneConfig, seed: u64, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, Stream::Init, &[0]);
        let k = config.conv_kernel;
        let shapes = config.conv_shapes();
        let mut blocks = shapes
            .iter()
            .map(|&(i, o)| ConvBlock::new(i, o, k, dtype, &mut r))
            .collect::<Result<Vec<_>>>()?;
        let decoder = blocks.split_off(NUM_DECODER_LAYERS);
        Ok(Self {
            config,
            dtype,
            encoder: blocks,
            decoder,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn num_parameters(&self) -> usize {
        self.vars().iter().map(|v| v.elem_count()).sum()
    }

    pub fn vars(&self) -> Vec<Var> {
        self.named_vars().into_iter().map(|(_, v)| v).collect()
    }

    pub fn named_vars(&self) -> Vec<(String, Var)> {
        let names = ["weight", "bias", "gamma", "beta"];
        let mut out = Vec::new();
        for (prefix, blocks) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, b) in blocks.iter().enumerate() {
                for (n, v) in names.iter().zip(b.vars()) {
                    out.push((format!("{prefix}.{i}.{n}"), v.clone()));
                }
            }
        }
        out
    }

    /// Run the network over one video. Inputs shorter than 32 frames are
    /// right-padded by repeating the last frame; `valid_len` records the
    /// original length.
    pub fn forward(&self, features: &FeatureSequence) -> Result<DecoderFeatures> {
        if features.dim() != self.config.input_dim {
            return Err(Error::ShapeError(format!(
                "{}: feature dim {} but backbone expects {}",
                features.video_id,
                features.dim(),
                self.config.input_dim
            )));
        }
        let x = array_to_tensor(&features.data, self.dtype)?;
        self.forward_tensor(&x)
    }

    /// `x`: `T x F`.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<DecoderFeatures> {
        let (t, f) = x.dims2()?;
        if f != self.config.input_dim {
            return Err(Error::ShapeError(format!("feature dim {f} but backbone expects {}", self.config.input_dim)));
        }
        if t == 0 {
            return Err(Error::ShapeError("empty input".into()));
        }
        let mut h = x.t()?.unsqueeze(0)?.contiguous()?;
        if t < MIN_LEN {
            h = h.pad_with_same(2, 0, MIN_LEN - t)?;
        }
        let padded_len = h.dim(2)?;

        let mut skips = Vec::with_capacity(NUM_DECODER_LAYERS);
        for (e, block) in self.encoder.iter().enumerate() {
            if e > 0 {
                h = pool2(&h)?;
            }
            h = block.forward(&h)?;
            skips.push(h.clone());
        }
        let mut z = Vec::with_capacity(NUM_DECODER_LAYERS);
        let mut d = self.decoder[0].forward(&h)?;
        z.push(d.clone());
        for u in 1..NUM_DECODER_LAYERS {
            let skip = &skips[NUM_DECODER_LAYERS - 1 - u];
            let up = up2(&d, skip.dim(2)?)?;
            d = self.decoder[u].forward(&Tensor::cat(&[&up, skip], 1)?)?;
            z.push(d.clone());
        }
        let z = z
            .into_iter()
            .map(|t| Ok(t.squeeze(0)?.t()?.contiguous()?))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderFeatures {
            z,
            valid_len: t,
            padded_len,
        })
    }

    /// Copy parameter values from another backbone of identical shape.
    pub fn load_from(&self, other: &Backbone) -> Result<()> {
        for ((_, a), (_, b)) in self.named_vars().iter().zip(other.named_vars()) {
            a.set(&b.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// Deep copy with independent parameter storage.
    pub fn deep_clone(&self) -> Result<Self> {
        let copy = Self::new(self.config.clone(), 0, self.dtype)?;
        copy.load_from(self)?;
        Ok(copy)
    }

    /// All parameters flattened to host `f32`, in `named_vars` order.
    pub fn snapshot(&self) -> Result<Vec<Vec<f32>>> {
        self.named_vars()
            .iter()
            .map(|(_, v)| Ok(v.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn input(t: usize, f: usize) -> FeatureSequence {
        let data = Array2::from_shape_fn((t, f), |(i, j)| ((i * 7 + j * 3) % 11) as f32 / 11.0 - 0.5);
        FeatureSequence::new("v", data, None).unwrap()
    }

    fn small(f: usize) -> BackboneConfig {
        BackboneConfig {
            input_dim: f,
            num_decoder_layers: 6,
            base_channels: 8,
            latent_dim_per_layer: vec![4, 4, 6, 6, 8, 8],
            conv_kernel: 3,
        }
    }

    #[test]
    fn lengths_for_power_of_two() {
        let m = Backbone::new(small(5), 1, DType::F32).unwrap();
        let dec = m.forward(&input(64, 5)).unwrap();
        assert_eq!(dec.lengths(), vec![2, 4, 8, 16, 32, 64]);
        let dims: Vec<usize> = dec.z.iter().map(|z| z.dim(1).unwrap()).collect();
        assert_eq!(dims, vec![4, 4, 6, 6, 8, 8]);
    }

    #[test]
    fn lengths_follow_repeated_ceil_halving() {
        // oracle: iterate ceil(x / 2) five times from 33
        let mut expected = vec![33usize];
        for _ in 0..5 {
            let last = *expected.last().unwrap();
            expected.push(last.div_ceil(2));
        }
        expected.reverse();
        assert_eq!(expected, vec![2, 3, 5, 9, 17, 33]);
        let m = Backbone::new(small(5), 1, DType::F32).unwrap();
        assert_eq!(m.forward(&input(33, 5)).unwrap().lengths(), expected);
        assert_eq!(decoder_lengths(33).to_vec(), expected);
    }

    #[test]
    fn short_inputs_are_padded() {
        let m = Backbone::new(small(3), 1, DType::F32).unwrap();
        let dec = m.forward(&input(5, 3)).unwrap();
        assert_eq!(dec.valid_len, 5);
        assert_eq!(dec.padded_len, 32);
        assert_eq!(dec.lengths(), vec![1, 2, 4, 8, 16, 32]);
    }

    #[test]
    fn feature_dim_mismatch() {
        let m = Backbone::new(small(5), 1, DType::F32).unwrap();
        assert!(matches!(m.forward(&input(40, 4)), Err(Error::ShapeError(_))));
    }

    #[test]
    fn deterministic_forward_and_init() {
        let a = Backbone::new(small(5), 3, DType::F32).unwrap();
        let b = Backbone::new(small(5), 3, DType::F32).unwrap();
        assert_eq!(a.snapshot().unwrap(), b.snapshot().unwrap());
        let x = input(50, 5);
        let za = a.forward(&x).unwrap().z[5].to_vec2::<f32>().unwrap();
        let zb = a.forward(&x).unwrap().z[5].to_vec2::<f32>().unwrap();
        assert_eq!(za, zb);
    }

    #[test]
    fn parameter_count_matches_config() {
        let m = Backbone::new(small(5), 0, DType::F32).unwrap();
        assert_eq!(m.num_parameters(), small(5).num_parameters());
    }

    #[test]
    fn full_scale_parameter_count() {
        let n = BackboneConfig::full_scale(2048).num_parameters() as f64;
        assert!((n / 4.07e6 - 1.0).abs() < 0.05, "{n}");
    }

    #[test]
    fn rejects_wrong_layer_count() {
        let mut c = small(5);
        c.num_decoder_layers = 5;
        assert!(Backbone::new(c, 0, DType::F32).is_err());
    }

    #[test]
    fn shifted_matmul_conv_matches_builtin() {
        let mut r = rng::from_seed(8);
        for l in [1usize, 2, 3, 7] {
            let x: Vec<f64> = (0..4 * l).map(|_| r.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..5 * 4 * 3).map(|_| r.random_range(-1.0..1.0)).collect();
            let x = Var::from_tensor(&Tensor::from_vec(x, (1, 4, l), &device()).unwrap()).unwrap();
            let w = Tensor::from_vec(w, (5, 4, 3), &device()).unwrap();
            let ours = conv1d_same(x.as_tensor(), &w).unwrap();
            let theirs = x.as_tensor().conv1d(&w, 1, 1, 1, 1).unwrap();
            let diff = (ours.clone() - theirs).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f64>().unwrap();
            assert!(diff < 1e-12, "length {l}: {diff}");
            let grads = ours.sum_all().unwrap().backward().unwrap();
            assert!(grads.get(x.as_tensor()).is_some());
        }
    }
}
