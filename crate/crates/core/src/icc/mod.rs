//! Unsupervised pretraining and the iterative contrast-classify loop.

mod run;
mod store;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

pub use run::{checkpoint_path, evaluate, predict_video, run_icc, supervised_baseline, IccOptions, IccRun, SupervisedBaseline};
pub use store::LabelStore;
pub use train::{
    classify_step, contrast_step, cross_entropy, generate_pseudo_labels, pretrain_unsupervised, ContrastOutcome,
    EpochRecord, PretrainOutcome, Setup,
};

/// Optimizer settings of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub contrast: PhaseConfig,
    pub classify_heads: PhaseConfig,
    pub classify_backbone_lr: f64,
    pub icc_iterations: usize,
    /// Contrast learning-rate factor for iterations after the first.
    pub contrast_lr_decay_after_first: f64,
    /// Ensemble weights of the six classifier heads.
    pub alpha: Vec<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            contrast: PhaseConfig {
                lr: 1e-3,
                weight_decay: 1e-4,
                epochs: 30,
                batch_size: 8,
            },
            classify_heads: PhaseConfig {
                lr: 1e-2,
                weight_decay: 1e-4,
                epochs: 200,
                batch_size: 8,
            },
            classify_backbone_lr: 1e-5,
            icc_iterations: 4,
            contrast_lr_decay_after_first: 0.1,
            alpha: crate::network::ClassifierHeads::uniform_alpha(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("contrast", &self.contrast), ("classify_heads", &self.classify_heads)] {
            if !(p.lr >= 0.0 && p.lr.is_finite()) || p.weight_decay < 0.0 || p.batch_size == 0 {
                return Err(Error::Config(format!("{name}: lr and weight decay must be >= 0 and batch size >= 1")));
            }
        }
        if !(self.classify_backbone_lr >= 0.0) || !(self.contrast_lr_decay_after_first > 0.0) {
            return Err(Error::Config("learning rates must be non-negative".into()));
        }
        if self.icc_iterations == 0 {
            return Err(Error::Config("icc_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// State of one finished contrast-classify iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccRecord {
    pub iteration: usize,
    /// Epoch-mean losses of the contrast phase that opened the iteration.
    pub contrast_loss: Vec<f64>,
    pub classify_loss: Vec<f64>,
    pub report: MetricReport,
    pub probe_mof: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IccHistory {
    pub records: Vec<IccRecord>,
}

impl IccHistory {
    pub const COLUMNS: [&'static str; 8] = ["iteration", "mof", "edit", "f1_10", "f1_25", "f1_50", "probe_mof", "wall_seconds"];

    pub fn push(&mut self, record: IccRecord) {
        debug_assert_eq!(record.iteration, self.records.len() + 1);
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IccRecord> {
        self.records.last()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::COLUMNS)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.report.values().iter().map(|v| format!("{v:.4}")));
            row.push(r.probe_mof.map_or(String::new(), |v| format!("{v:.4}")));
            row.push(format!("{:.3}", r.wall_seconds));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
