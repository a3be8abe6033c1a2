use super::{ContrastConfig, SampleIndex};

/// Positive and negative sets for every sampled frame of a batch. Indices
/// refer to positions in `anchors`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSets {
    pub anchors: Vec<SampleIndex>,
    pub positives: Vec<Vec<usize>>,
    pub negatives: Vec<Vec<usize>>,
}

impl ContrastSets {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Total number of (anchor, positive) pairs.
    pub fn num_positive_pairs(&self) -> usize {
        self.positives.iter().map(Vec::len).sum()
    }
}

/// Every sample is an anchor. `(m, j)` is a positive of `(n, i)` when both
/// share an activity and a label and lie within `delta` in normalized time;
/// a negative when the activities differ or the labels differ. Same-label
/// pairs farther apart than `delta` belong to neither set.
///
/// `labels[n]` is indexed by sample frame. Without activities (or with
/// activity negatives disabled) every pair counts as same-activity.
pub fn build_sets(
    samples: &[Vec<SampleIndex>],
    labels: &[&[usize]],
    activities: &[Option<usize>],
    config: &ContrastConfig,
) -> ContrastSets {
    assert_eq!(samples.len(), labels.len());
    assert_eq!(samples.len(), activities.len());
    let use_activity = config.use_activity_negatives && activities.iter().all(Option::is_some);
    let anchors: Vec<SampleIndex> = samples.iter().flatten().copied().collect();
    let label_of = |s: &SampleIndex| labels[s.video][s.frame];
    let mut positives = vec![Vec::new(); anchors.len()];
    let mut negatives = vec![Vec::new(); anchors.len()];
    for (a, sa) in anchors.iter().enumerate() {
        let la = label_of(sa);
        for (b, sb) in anchors.iter().enumerate() {
            if a == b {
                continue;
            }
            let same_activity = !use_activity || activities[sa.video] == activities[sb.video];
            if !same_activity {
                negatives[a].push(b);
            } else if la != label_of(sb) {
                negatives[a].push(b);
            } else if (sa.time - sb.time).abs() <= config.delta {
                positives[a].push(b);
            }
        }
    }
    ContrastSets {
        anchors,
        positives,
        negatives,
    }
}
