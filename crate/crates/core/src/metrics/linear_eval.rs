use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricReport;
use crate::data::{downsample_features, downsample_labels, upsample_labels, Dataset, FeatureSequence, LabelSequence};
use crate::error::{Error, Result};
use crate::network::{
    multires_feature_with, probe_train, tensor_to_array, Backbone, LinearProbe, NormOrder, ProbeConfig, UpsampleMode,
};

/// Which per-frame vectors the probe sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Representation {
    /// The input features themselves.
    Raw,
    /// The backbone's multi-resolution feature.
    MultiRes { mode: UpsampleMode, order: NormOrder },
}

impl Default for Representation {
    fn default() -> Self {
        Representation::MultiRes {
            mode: UpsampleMode::Nearest,
            order: NormOrder::BeforeConcat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearEvalConfig {
    pub representation: Representation,
    pub probe: ProbeConfig,
    /// Temporal window applied before representing frames.
    pub w0: usize,
}

impl Default for LinearEvalConfig {
    fn default() -> Self {
        Self {
            representation: Representation::default(),
            probe: ProbeConfig::default(),
            w0: 2,
        }
    }
}

/// Frame vectors of one video at window resolution (`ceil(T / w0)` rows).
pub fn represent(backbone: Option<&Backbone>, video: &FeatureSequence, config: &LinearEvalConfig) -> Result<Array2<f32>> {
    let data = downsample_features(&video.data, config.w0);
    match config.representation {
        Representation::Raw => Ok(data),
        Representation::MultiRes { mode, order } => {
            let backbone = backbone.ok_or_else(|| Error::BadSpec("a multi-resolution probe needs a backbone".into()))?;
            let x = crate::network::array_to_tensor(&data, backbone.dtype())?;
            let dec = backbone.forward_tensor(&x)?;
            let f = multires_feature_with(&dec, dec.padded_len, mode, order)?;
            tensor_to_array(&f.valid()?)
        }
    }
}

/// Result of one probe run.
#[derive(Debug, Clone)]
pub struct LinearEval {
    pub report: MetricReport,
    pub probe: LinearProbe,
}

/// Fit a linear probe on the frozen representation of every video in
/// `train_labels` and score it on the dataset's test split.
pub fn linear_evaluation(
    backbone: Option<&Backbone>,
    dataset: &Dataset,
    train_labels: &[LabelSequence],
    config: &LinearEvalConfig,
) -> Result<LinearEval> {
    if config.w0 == 0 {
        return Err(Error::BadSpec("w0 must be >= 1".into()));
    }
    let mut xs = Vec::with_capacity(train_labels.len());
    let mut ys = Vec::with_capacity(train_labels.len());
    for l in train_labels {
        if dataset.test_ids.contains(&l.video_id) {
            return Err(Error::Refused(format!("{} is a test video", l.video_id)));
        }
        let (video, _) = dataset.video(&l.video_id)?;
        l.check_pairs_with(video)?;
        xs.push(represent(backbone, video, config)?);
        ys.push(downsample_labels(&l.labels, config.w0));
    }
    let num_actions = dataset.vocab.num_actions();
    let probe = probe_train(&xs, &ys, num_actions, &config.probe)?;

    let mut results = Vec::new();
    for id in dataset.test_ids() {
        let (video, gt) = dataset.video(&id)?;
        let x = represent(backbone, video, config)?;
        let pred = upsample_labels(&probe.predict(x.view())?, config.w0, video.len());
        results.push((id, pred, gt.labels.clone()));
    }
    let report = MetricReport::evaluate(results.iter().map(|(id, p, g)| (id.as_str(), p.as_slice(), g.as_slice())))?;
    Ok(LinearEval { report, probe })
}
