use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetSplit, LabelSequence, LabelSource};
use crate::error::{Error, Result};

/// Training labels per video at input resolution. Labeled videos hold their
/// ground truth for the whole run; unlabeled videos hold cluster labels and
/// later pseudo-labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStore {
    entries: BTreeMap<String, LabelSequence>,
    labeled: BTreeSet<String>,
}

impl LabelStore {
    /// Ground truth for every labeled video; unlabeled videos start empty.
    pub fn new(dataset: &Dataset, split: &DatasetSplit) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for id in &split.labeled_ids {
            let (_, gt) = dataset.video(id)?;
            let mut gt = gt.clone();
            gt.source = LabelSource::GroundTruth;
            entries.insert(id.clone(), gt);
        }
        Ok(Self {
            entries,
            labeled: split.labeled_ids.clone(),
        })
    }

    pub fn get(&self, id: &str) -> Result<&LabelSequence> {
        self.entries.get(id).ok_or_else(|| Error::MissingLabels(id.to_string()))
    }

    pub fn is_labeled(&self, id: &str) -> bool {
        self.labeled.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabelSequence> {
        self.entries.values()
    }

    /// Store cluster labels; labeled videos keep their ground truth.
    pub fn record_clusters(&mut self, labels: Vec<LabelSequence>) {
        for l in labels {
            if !self.labeled.contains(&l.video_id) {
                self.entries.insert(l.video_id.clone(), l);
            }
        }
    }

    /// Store pseudo-labels. The whole update is refused, with nothing
    /// written, if any sequence belongs to a labeled video.
    pub fn set_pseudo(&mut self, labels: Vec<LabelSequence>) -> Result<()> {
        if let Some(l) = labels.iter().find(|l| self.labeled.contains(&l.video_id)) {
            return Err(Error::Refused(format!("{} is labeled; its ground truth is kept", l.video_id)));
        }
        for mut l in labels {
            l.source = LabelSource::Pseudo;
            self.entries.insert(l.video_id.clone(), l);
        }
        Ok(())
    }
}
