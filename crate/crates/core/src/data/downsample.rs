use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::{DownsampleConfig, FeatureSequence, LabelSequence};
use crate::error::{Error, Result};

/// Element-wise max over consecutive windows of `w` frames. The final partial
/// window is kept, so the output has `ceil(T / w)` frames.
pub fn downsample_features(data: &Array2<f32>, w: usize) -> Array2<f32> {
    assert!(w >= 1, "window must be >= 1");
    let (t, f) = data.dim();
    let out_len = t.div_ceil(w);
    let mut out = Array2::<f32>::zeros((out_len, f));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let window = data.slice(s![i * w..((i + 1) * w).min(t), ..]);
        for (j, v) in row.iter_mut().enumerate() {
            *v = window.column(j).fold(f32::NEG_INFINITY, |m, &x| m.max(x));
        }
    }
    out
}

/// Most frequent label per window; ties go to the smallest label.
pub fn downsample_labels(labels: &[usize], w: usize) -> Vec<usize> {
    assert!(w >= 1, "window must be >= 1");
    labels
        .chunks(w)
        .map(|window| {
            let max_label = *window.iter().max().unwrap();
            let mut counts = vec![0usize; max_label + 1];
            for &l in window {
                counts[l] += 1;
            }
            // first maximum wins
            let mut best = 0;
            for (l, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = l;
                }
            }
            best
        })
        .collect()
}

pub fn downsample(
    features: &FeatureSequence,
    labels: Option<&LabelSequence>,
    w: usize,
) -> Result<(FeatureSequence, Option<LabelSequence>)> {
    if w == 0 {
        return Err(Error::BadSpec("downsample window must be >= 1".into()));
    }
    if let Some(l) = labels {
        l.check_pairs_with(features)?;
    }
    let out = FeatureSequence {
        video_id: features.video_id.clone(),
        data: downsample_features(&features.data, w),
        activity: features.activity,
    };
    let labels = labels.map(|l| LabelSequence {
        video_id: l.video_id.clone(),
        labels: downsample_labels(&l.labels, w),
        source: l.source,
    });
    Ok((out, labels))
}

/// Map labels at window resolution back onto `target_len` original frames.
pub fn upsample_labels(labels: &[usize], w: usize, target_len: usize) -> Vec<usize> {
    (0..target_len).map(|t| labels[(t / w).min(labels.len() - 1)]).collect()
}

/// Window size for one training pass: uniform on `[w_min, w_max]` when
/// augmenting, otherwise `w0`.
pub fn sample_augment_window<R: Rng + ?Sized>(config: &DownsampleConfig, rng: &mut R) -> usize {
    if config.augment {
        rng.random_range(config.w_min..=config.w_max)
    } else {
        config.w0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSource;
    use crate::rng;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn max_per_window() {
        let x = array![[1.0f32], [3.0], [2.0], [0.0]];
        assert_eq!(downsample_features(&x, 2), array![[3.0], [2.0]]);
    }

    #[test]
    fn majority_label_per_window() {
        // windows [0,0,1] -> 0 and [1,1,2] -> 1
        assert_eq!(downsample_labels(&[0, 0, 1, 1, 1, 2], 3), vec![0, 1]);
        // tie between 1 and 2 -> smaller
        assert_eq!(downsample_labels(&[2, 1], 2), vec![1]);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let f = FeatureSequence::new("v", array![[1.0], [2.0]], None).unwrap();
        let l = LabelSequence::new("v", vec![0], LabelSource::GroundTruth);
        assert!(matches!(downsample(&f, Some(&l), 2), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn augment_off_returns_w0() {
        let c = DownsampleConfig::new(4, false).unwrap();
        let mut r = rng::from_seed(1);
        assert!((0..100).all(|_| sample_augment_window(&c, &mut r) == 4));
    }

    #[test]
    fn augment_window_boundary_w0_one() {
        let c = DownsampleConfig::new(1, true).unwrap();
        let mut r = rng::from_seed(2);
        let mut seen = [false; 3];
        for _ in 0..1000 {
            let w = sample_augment_window(&c, &mut r);
            assert!((1..=2).contains(&w));
            seen[w] = true;
        }
        assert!(seen[1] && seen[2]);
    }

    #[test]
    fn augment_window_is_uniform() {
        let c = DownsampleConfig::new(4, true).unwrap();
        let mut r = rng::from_seed(3);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[sample_augment_window(&c, &mut r)] += 1;
        }
        let p = 1.0 / 7.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for w in 2..=8 {
            assert!(
                (counts[w] as f64 - mean).abs() < 3.0 * sigma,
                "w={w}: {} vs {mean}",
                counts[w]
            );
        }
        assert_eq!(counts[0] + counts[1], 0);
    }

    #[test]
    fn upsample_inverts_window_index() {
        assert_eq!(upsample_labels(&[4, 5], 3, 5), vec![4, 4, 4, 5, 5]);
    }

    proptest! {
        #[test]
        fn brute_force_window_max(
            t in 1usize..=64,
            f in 1usize..=4,
            w in 1usize..=9,
            seed in any::<u64>(),
        ) {
            use rand::Rng as _;
            let mut r = rng::from_seed(seed);
            let x = Array2::from_shape_fn((t, f), |_| r.random_range(-5.0f32..5.0));
            let y = downsample_features(&x, w);
            prop_assert_eq!(y.nrows(), t.div_ceil(w));
            for i in 0..y.nrows() {
                for j in 0..f {
                    let mut m = f32::NEG_INFINITY;
                    for tau in (i * w)..((i * w + w).min(t)) {
                        m = m.max(x[[tau, j]]);
                    }
                    prop_assert_eq!(y[[i, j]], m);
                }
            }
        }

        #[test]
        fn window_one_is_identity(labels in prop::collection::vec(0usize..5, 1..40)) {
            prop_assert_eq!(downsample_labels(&labels, 1), labels.clone());
            let x = Array2::from_shape_fn((labels.len(), 2), |(i, j)| (i * 2 + j) as f32);
            prop_assert_eq!(downsample_features(&x, 1), x);
        }
    }
}
