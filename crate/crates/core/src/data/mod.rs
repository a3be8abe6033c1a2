//! Dataset representation: features, labels, vocabularies, splits.

mod downsample;
pub mod io;
mod split;
mod synth;

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use downsample::{downsample, downsample_features, downsample_labels, sample_augment_window, upsample_labels};
pub use split::{make_split, missing_actions};
pub use synth::{synth_generate, SynthOutput, SynthSpec};

/// Ordered action and complex-activity names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVocabulary {
    actions: Vec<String>,
    activities: Vec<String>,
}

impl ActionVocabulary {
    pub fn new(actions: Vec<String>, activities: Vec<String>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::BadSpec("vocabulary needs at least one action".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &actions {
            if !seen.insert(a.as_str()) {
                return Err(Error::BadSpec(format!("duplicate action name {a:?}")));
            }
        }
        let mut seen = BTreeSet::new();
        for a in &activities {
            if !seen.insert(a.as_str()) {
                return Err(Error::BadSpec(format!("duplicate activity name {a:?}")));
            }
        }
        Ok(Self { actions, activities })
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_activities(&self) -> usize {
        self.activities.len()
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    pub fn activity_index(&self, name: &str) -> Option<usize> {
        self.activities.iter().position(|a| a == name)
    }
}

/// Frame-wise input features of one video, `T x F`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub data: Array2<f32>,
    pub activity: Option<usize>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, data: Array2<f32>, activity: Option<usize>) -> Result<Self> {
        let video_id = video_id.into();
        let (t, f) = data.dim();
        if t == 0 || f == 0 {
            return Err(Error::ShapeError(format!("{video_id}: empty feature array {t}x{f}")));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData { what: video_id, index });
        }
        Ok(Self { video_id, data, activity })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GroundTruth,
    Cluster,
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence {
    pub video_id: String,
    pub labels: Vec<usize>,
    pub source: LabelSource,
}

impl LabelSequence {
    pub fn new(video_id: impl Into<String>, labels: Vec<usize>, source: LabelSource) -> Self {
        Self {
            video_id: video_id.into(),
            labels,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Check the pairing with a feature sequence.
    pub fn check_pairs_with(&self, features: &FeatureSequence) -> Result<()> {
        if self.labels.len() != features.len() {
            return Err(Error::LengthMismatch {
                what: format!("labels of {}", self.video_id),
                expected: features.len(),
                actual: self.labels.len(),
            });
        }
        Ok(())
    }

    pub fn check_range(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= num_classes) {
            Some(l) => Err(Error::BadSpec(format!(
                "{}: label {l} outside [0, {num_classes})",
                self.video_id
            ))),
            None => Ok(()),
        }
    }
}

/// Labeled / unlabeled partition of the training videos.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub labeled_ids: BTreeSet<String>,
    pub unlabeled_ids: BTreeSet<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn is_labeled(&self, id: &str) -> bool {
        self.labeled_ids.contains(id)
    }

    pub fn train_ids(&self) -> impl Iterator<Item = &String> {
        self.labeled_ids.iter().chain(self.unlabeled_ids.iter())
    }
}

/// Temporal max-pool window and its augmentation range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownsampleConfig {
    pub w0: usize,
    pub w_min: usize,
    pub w_max: usize,
    pub augment: bool,
}

impl DownsampleConfig {
    pub fn new(w0: usize, augment: bool) -> Result<Self> {
        if w0 == 0 {
            return Err(Error::BadSpec("downsample window must be >= 1".into()));
        }
        Ok(Self {
            w0,
            w_min: w0.div_ceil(2),
            w_max: 2 * w0,
            augment,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.w_min && self.w_min <= self.w0 && self.w0 <= self.w_max) {
            return Err(Error::BadSpec(format!(
                "need 1 <= w_min <= w0 <= w_max, got {} {} {}",
                self.w_min, self.w0, self.w_max
            )));
        }
        Ok(())
    }
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        Self::new(2, true).expect("valid default")
    }
}

/// Features, ground truth and the test partition of one dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: ActionVocabulary,
    pub features: Vec<FeatureSequence>,
    /// Ground truth, index-aligned with `features`.
    pub labels: Vec<LabelSequence>,
    pub test_ids: BTreeSet<String>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(
        vocab: ActionVocabulary,
        features: Vec<FeatureSequence>,
        labels: Vec<LabelSequence>,
        test_ids: BTreeSet<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "label files".into(),
                expected: features.len(),
                actual: labels.len(),
            });
        }
        let mut index = HashMap::new();
        for (i, (f, l)) in features.iter().zip(&labels).enumerate() {
            if f.video_id != l.video_id {
                return Err(Error::BadSpec(format!(
                    "features {} paired with labels {}",
                    f.video_id, l.video_id
                )));
            }
            l.check_pairs_with(f)?;
            l.check_range(vocab.num_actions())?;
            if let Some(c) = f.activity {
                if c >= vocab.num_activities() {
                    return Err(Error::BadSpec(format!("{}: activity {c} out of range", f.video_id)));
                }
            }
            if index.insert(f.video_id.clone(), i).is_some() {
                return Err(Error::BadSpec(format!("duplicate video id {}", f.video_id)));
            }
        }
        for id in &test_ids {
            if !index.contains_key(id) {
                return Err(Error::BadSpec(format!("test video {id} not in dataset")));
            }
        }
        Ok(Self {
            vocab,
            features,
            labels,
            test_ids,
            index,
        })
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn video(&self, id: &str) -> Result<(&FeatureSequence, &LabelSequence)> {
        let i = self.position(id).ok_or_else(|| Error::MissingLabels(id.to_string()))?;
        Ok((&self.features[i], &self.labels[i]))
    }

    /// Ids of all non-test videos, in dataset order.
    pub fn train_ids(&self) -> Vec<String> {
        self.features
            .iter()
            .map(|f| f.video_id.clone())
            .filter(|id| !self.test_ids.contains(id))
            .collect()
    }

    pub fn test_ids(&self) -> Vec<String> {
        self.features
            .iter()
            .map(|f| f.video_id.clone())
            .filter(|id| self.test_ids.contains(id))
            .collect()
    }

    pub fn has_activities(&self) -> bool {
        self.vocab.num_activities() > 0 && self.features.iter().all(|f| f.activity.is_some())
    }

    pub fn input_dim(&self) -> usize {
        self.features.first().map_or(0, FeatureSequence::dim)
    }
}
