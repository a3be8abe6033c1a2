//! Synthetic segmentation data.
//!
//! Every action owns a fixed prototype vector; prototypes are scaled
//! orthonormal directions, so any two sit exactly `prototype_distance` apart.
//! Each complex activity draws a subset of actions and an order over it; its
//! videos walk that order (with random skips) and hold each action for a
//! geometric-ish number of frames. Frames are prototype plus isotropic
//! Gaussian noise.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ActionVocabulary, Dataset, FeatureSequence, LabelSequence, LabelSource};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// 0 disables complex activities; `videos_per_activity` is then the total.
    pub num_activities: usize,
    pub num_actions: usize,
    pub videos_per_activity: usize,
    pub mean_segments: usize,
    /// Mean segment length in frames.
    pub mean_duration: usize,
    pub frame_dim: usize,
    pub noise_scale: f64,
    pub prototype_distance: f64,
    /// Videos of each activity held out for testing.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_activities: 4,
            num_actions: 6,
            videos_per_activity: 12,
            mean_segments: 5,
            mean_duration: 24,
            frame_dim: 16,
            noise_scale: 0.5,
            prototype_distance: 1.0,
            test_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadSpec(m));
        if self.num_actions < 2 {
            return bad(format!("need at least 2 actions, got {}", self.num_actions));
        }
        if self.frame_dim < self.num_actions {
            return bad(format!(
                "frame_dim {} must be >= num_actions {}",
                self.frame_dim, self.num_actions
            ));
        }
        if self.videos_per_activity == 0 || self.mean_segments == 0 || self.mean_duration == 0 {
            return bad("videos_per_activity, mean_segments and mean_duration must be positive".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale {} must be finite and >= 0", self.noise_scale));
        }
        if !(self.prototype_distance > 0.0 && self.prototype_distance.is_finite()) {
            return bad(format!("prototype_distance {} must be positive", self.prototype_distance));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test_fraction {} not in [0, 1)", self.test_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub features: Vec<FeatureSequence>,
    pub labels: Vec<LabelSequence>,
    pub vocab: ActionVocabulary,
    /// `num_actions x frame_dim`.
    pub prototypes: Array2<f32>,
    pub test_ids: BTreeSet<String>,
}

impl SynthOutput {
    pub fn into_dataset(self) -> Result<Dataset> {
        Dataset::new(self.vocab, self.features, self.labels, self.test_ids)
    }
}

fn orthonormal_prototypes<R: Rng>(n: usize, dim: usize, scale: f64, rng: &mut R) -> Array2<f32> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Array2::from_shape_fn((n, dim), |(a, j)| (basis[a][j] * scale) as f32)
}

/// One video's action sequence from an activity's script. Consecutive
/// segments always differ.
fn video_actions<R: Rng>(script: &[usize], rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &a in script {
        if rng.random_bool(0.8) && out.last() != Some(&a) {
            out.push(a);
        }
    }
    if out.is_empty() {
        out.push(script[0]);
    }
    out
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, Stream::Synth, &[]);
    let a = spec.num_actions;
    let scale = spec.prototype_distance / std::f64::consts::SQRT_2;
    let prototypes = orthonormal_prototypes(a, spec.frame_dim, scale, &mut r);

    let groups = spec.num_activities.max(1);
    let subset_size = if spec.num_activities == 0 {
        a
    } else {
        (2 * a).div_ceil(3).max(2).min(a)
    };
    let script_len = ((spec.mean_segments as f64) * 1.25).round().max(2.0) as usize;
    let min_dur = (spec.mean_duration / 3).max(1);
    let geom = Geometric::new(1.0 / (1.0 + (spec.mean_duration - min_dur) as f64))
        .map_err(|e| Error::BadSpec(e.to_string()))?;
    let max_dur = 3 * spec.mean_duration;

    let actions = (0..a).map(|i| format!("action{i:02}")).collect();
    let activities = (0..spec.num_activities).map(|c| format!("activity{c}")).collect();
    let vocab = ActionVocabulary::new(actions, activities)?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut test_ids = BTreeSet::new();
    let n_test = (spec.test_fraction * spec.videos_per_activity as f64).round() as usize;
    let stride = (spec.videos_per_activity / n_test.max(1)).max(1);
    for c in 0..groups {
        let mut order: Vec<usize> = (0..a).collect();
        order.shuffle(&mut r);
        order.truncate(subset_size);
        let script: Vec<usize> = order.iter().copied().cycle().take(script_len).collect();
        for k in 0..spec.videos_per_activity {
            let video_id = if spec.num_activities == 0 {
                format!("v{k:03}")
            } else {
                format!("c{c}_v{k:03}")
            };
            let mut frame_labels = Vec::new();
            for act in video_actions(&script, &mut r) {
                let d = (min_dur + geom.sample(&mut r) as usize).min(max_dur);
                frame_labels.extend(std::iter::repeat_n(act, d));
            }
            let t = frame_labels.len();
            let mut data = Array2::<f32>::zeros((t, spec.frame_dim));
            for (i, &act) in frame_labels.iter().enumerate() {
                for j in 0..spec.frame_dim {
                    let noise: f64 = r.sample(StandardNormal);
                    data[[i, j]] = prototypes[[act, j]] + (spec.noise_scale * noise) as f32;
                }
            }
            // evenly spaced test videos within each activity
            if k % stride == 0 && k / stride < n_test {
                test_ids.insert(video_id.clone());
            }
            let activity = (spec.num_activities > 0).then_some(c);
            features.push(FeatureSequence::new(video_id.clone(), data, activity)?);
            labels.push(LabelSequence::new(video_id, frame_labels, LabelSource::GroundTruth));
        }
    }
    Ok(SynthOutput {
        features,
        labels,
        vocab,
        prototypes,
        test_ids,
    })
}
