//! Temporal sampling, input clustering, positive/negative set construction
//! and the frame- and video-level contrastive losses.

mod kmeans;
mod loss;
mod sets;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kmeans::{cluster_batch, kmeans, write_cluster_csv, KMeans};
pub use loss::{frame_contrast_loss, total_contrast_loss, video_contrast_loss, FrameLoss, VideoLoss};
pub use sets::{build_sets, ContrastSets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastConfig {
    /// Partitions per video; `2K` frames are sampled.
    pub k: usize,
    /// Offset of each partner sample, in normalized time.
    pub epsilon: f64,
    /// Temporal proximity threshold for positives, in normalized time.
    pub delta: f64,
    pub tau: f64,
    /// Clusters for input k-means; `None` means twice the number of actions.
    pub num_clusters: Option<usize>,
    pub use_video_level: bool,
    pub use_activity_negatives: bool,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self::with_k(20)
    }
}

impl ContrastConfig {
    /// Defaults with `epsilon = 1/(3K)`.
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            epsilon: 1.0 / (3.0 * k.max(1) as f64),
            delta: 0.5,
            tau: 0.1,
            num_clusters: None,
            use_video_level: true,
            use_activity_negatives: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::BadSpec("K must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0 / self.k as f64) {
            return Err(Error::BadSpec(format!("epsilon {} must lie in (0, 1/K)", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::BadSpec(format!("delta {} must lie in (0, 1]", self.delta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::BadSpec(format!("tau {} must be positive", self.tau)));
        }
        if self.num_clusters == Some(0) {
            return Err(Error::BadSpec("num_clusters must be >= 1".into()));
        }
        Ok(())
    }

    pub fn clusters_for(&self, num_actions: usize) -> usize {
        self.num_clusters.unwrap_or(2 * num_actions)
    }
}

/// One sampled frame of one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleIndex {
    pub video: usize,
    pub sample: usize,
    /// Normalized time in `[0, 1]`.
    pub time: f64,
    /// Nearest frame in `[0, video_len)`.
    pub frame: usize,
}

fn nearest_frame(time: f64, video_len: usize) -> usize {
    ((time * (video_len - 1) as f64).round() as usize).min(video_len - 1)
}

fn partner_time<R: Rng + ?Sized>(time: f64, epsilon: f64, rng: &mut R) -> f64 {
    let magnitude = epsilon * (1.0 - rng.random::<f64>());
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    (time + sign * magnitude).clamp(0.0, 1.0)
}

/// `K` samples, one uniform draw per equal partition of `[0, 1]`, followed by
/// `K` partners each displaced by a random sign and a magnitude in `(0, epsilon]`,
/// clamped to `[0, 1]`.
pub fn sample_frames<R: Rng + ?Sized>(video: usize, video_len: usize, config: &ContrastConfig, rng: &mut R) -> Vec<SampleIndex> {
    assert!(video_len >= 1 && config.k >= 1);
    let k = config.k;
    let mut times = Vec::with_capacity(2 * k);
    for p in 0..k {
        let u: f64 = rng.random();
        times.push((p as f64 + u) / k as f64);
    }
    for i in 0..k {
        times.push(partner_time(times[i], config.epsilon, rng));
    }
    times
        .into_iter()
        .enumerate()
        .map(|(sample, time)| SampleIndex {
            video,
            sample,
            time,
            frame: nearest_frame(time, video_len),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn single_partition() {
        let cfg = ContrastConfig::with_k(1);
        let mut r = rng::from_seed(1);
        for _ in 0..100 {
            let s = sample_frames(0, 50, &cfg, &mut r);
            assert_eq!(s.len(), 2);
            assert!((0.0..=1.0).contains(&s[0].time));
            assert!((s[1].time - s[0].time).abs() <= cfg.epsilon + 1e-15);
        }
    }

    #[test]
    fn first_half_lands_one_per_quartile() {
        let cfg = ContrastConfig::with_k(4);
        let mut r = rng::from_seed(2);
        for _ in 0..10_000 {
            let s = sample_frames(3, 97, &cfg, &mut r);
            assert_eq!(s.len(), 8);
            for (p, x) in s[..4].iter().enumerate() {
                assert!(x.time >= p as f64 / 4.0 && x.time <= (p + 1) as f64 / 4.0);
            }
            for x in &s {
                assert!(x.frame < 97 && x.video == 3);
                assert!((0.0..=1.0).contains(&x.time));
            }
        }
    }

    #[test]
    fn partner_near_the_end_is_clamped() {
        let mut r = rng::from_seed(3);
        let mut above = 0;
        for _ in 0..2000 {
            let t = partner_time(0.999, 0.01, &mut r);
            assert!((0.0..=1.0).contains(&t) && t >= 0.989);
            above += usize::from(t == 1.0);
        }
        assert!(above > 500);
    }

    #[test]
    fn config_validation() {
        assert!(ContrastConfig::default().validate().is_ok());
        assert!(ContrastConfig { epsilon: 0.1, ..ContrastConfig::with_k(10) }.validate().is_err());
        assert!(ContrastConfig { delta: 0.0, ..ContrastConfig::default() }.validate().is_err());
        assert!(ContrastConfig { tau: 0.0, ..ContrastConfig::default() }.validate().is_err());
        assert_eq!(ContrastConfig::default().clusters_for(6), 12);
    }
}
