use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::{DatasetSplit, LabelSequence};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Pick `max(min_labeled, round(fraction * N))` labeled videos; the rest are
/// unlabeled. Deterministic in `(video_ids, fraction, seed, min_labeled)`.
pub fn make_split(video_ids: &[String], labeled_fraction: f64, seed: u64, min_labeled: usize) -> Result<DatasetSplit> {
    if video_ids.is_empty() {
        return Err(Error::TooFewVideos {
            needed: 1,
            available: 0,
        });
    }
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::BadSpec(format!("labeled fraction {labeled_fraction} not in (0, 1]")));
    }
    let n = video_ids.len();
    if min_labeled > n {
        return Err(Error::TooFewVideos {
            needed: min_labeled,
            available: n,
        });
    }
    let n_labeled = min_labeled.max((labeled_fraction * n as f64).round() as usize).min(n);

    // order-independent: sort before shuffling
    let mut ids: Vec<String> = video_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    ids.shuffle(&mut rng::stream(seed, Stream::Split, &[]));
    let labeled_ids: BTreeSet<String> = ids[..n_labeled].iter().cloned().collect();
    let unlabeled_ids: BTreeSet<String> = ids[n_labeled..].iter().cloned().collect();
    Ok(DatasetSplit {
        labeled_ids,
        unlabeled_ids,
        seed,
    })
}

/// Actions in `0..num_actions` never observed in the labeled videos.
pub fn missing_actions<'a>(
    split: &DatasetSplit,
    labels: impl IntoIterator<Item = &'a LabelSequence>,
    num_actions: usize,
) -> Vec<usize> {
    let mut seen = vec![false; num_actions];
    for l in labels.into_iter().filter(|l| split.is_labeled(&l.video_id)) {
        for &a in &l.labels {
            if a < num_actions {
                seen[a] = true;
            }
        }
    }
    (0..num_actions).filter(|&a| !seen[a]).collect()
}
