use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use serde::Serialize;

use super::{predict_video, LabelStore, TrainConfig};
use crate::contrastive::{
    build_sets, cluster_batch, frame_contrast_loss, sample_frames, total_contrast_loss, video_contrast_loss,
    ContrastConfig,
};
use crate::data::{
    downsample_features, downsample_labels, sample_augment_window, upsample_labels, Dataset, DatasetSplit,
    DownsampleConfig, FeatureSequence, LabelSequence, LabelSource,
};
use crate::error::{Error, Result};
use crate::network::{
    ensemble_probabilities, multires_feature, video_summary, Backbone, ClassifierHeads, DecoderFeatures, UpsampleMode,
};
use crate::rng::{self, Stream};

pub(crate) const PRETRAIN: u64 = 0;
pub(crate) const CONTRAST: u64 = 1;
pub(crate) const CLASSIFY: u64 = 2;
pub(crate) const SUPERVISED: u64 = 3;

/// Everything a training phase reads but never changes.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a DatasetSplit,
    pub contrast: &'a ContrastConfig,
    pub downsample: &'a DownsampleConfig,
    pub train: &'a TrainConfig,
}

impl Setup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.contrast.validate()?;
        self.downsample.validate()?;
        self.train.validate()?;
        for id in self.split.train_ids() {
            if self.dataset.test_ids.contains(id) {
                return Err(Error::BadSpec(format!("{id} is both a training and a test video")));
            }
            self.dataset.video(id)?;
        }
        Ok(())
    }

    fn train_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.split.train_ids().cloned().collect();
        ids.sort();
        ids
    }

    fn activities_enabled(&self) -> bool {
        self.dataset.has_activities()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub phase: &'static str,
    pub iteration: usize,
    pub epoch: usize,
    pub mean_loss: f64,
}

fn log_epoch(phase: &'static str, iteration: usize, epoch: usize, mean_loss: f64) {
    let rec = EpochRecord {
        phase,
        iteration,
        epoch,
        mean_loss,
    };
    log::info!("{}", serde_json::to_string(&rec).unwrap_or_default());
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Mean loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Cluster labels of the last epoch, mapped back to input resolution.
    pub cluster_labels: Vec<LabelSequence>,
}

#[derive(Debug, Clone)]
pub struct ContrastOutcome {
    pub loss_curve: Vec<f64>,
    /// Learning rate the optimizer ran with.
    pub lr: f64,
}

fn adamw(vars: Vec<Var>, lr: f64, weight_decay: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            weight_decay,
            ..ParamsAdamW::default()
        },
    )?)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}

fn shuffled(ids: &[String], seed: u64, path: &[u64]) -> Vec<String> {
    let mut ids = ids.to_vec();
    ids.shuffle(&mut rng::stream(seed, Stream::Shuffle, path));
    ids
}

fn downsampled(video: &FeatureSequence, w: usize) -> FeatureSequence {
    FeatureSequence {
        video_id: video.video_id.clone(),
        data: downsample_features(&video.data, w),
        activity: video.activity,
    }
}

/// Frame- plus video-level contrastive loss for decoded videos whose frame
/// labels (at decoder resolution) are `labels`. `None` when no term applies.
fn contrast_terms(
    setup: &Setup,
    decs: &[DecoderFeatures],
    labels: &[&[usize]],
    activities: &[Option<usize>],
    sampler: &mut rng::Rng,
) -> Result<Option<Tensor>> {
    let cfg = setup.contrast;
    let use_video = cfg.use_video_level && setup.activities_enabled();
    let mut feats = Vec::with_capacity(decs.len());
    let mut samples = Vec::with_capacity(decs.len());
    let mut summaries = Vec::new();
    for (n, dec) in decs.iter().enumerate() {
        let f = multires_feature(dec, dec.padded_len, UpsampleMode::Nearest)?;
        let valid = f.valid()?;
        samples.push(sample_frames(n, f.valid_len, cfg, sampler));
        if use_video {
            summaries.push(video_summary(&f)?);
        }
        feats.push(valid);
    }
    let sets = build_sets(&samples, labels, activities, cfg);
    let frame = match frame_contrast_loss(&feats, &sets, cfg.tau) {
        Ok(l) => Some(l.loss),
        Err(Error::NoValidAnchors { .. }) => None,
        Err(e) => return Err(e),
    };
    let video = if use_video {
        let acts: Vec<usize> = activities.iter().map(|a| a.expect("activities enabled")).collect();
        let v = video_contrast_loss(&Tensor::stack(&summaries, 0)?, &acts, cfg.tau)?;
        (!v.skipped).then_some(v.loss)
    } else {
        None
    };
    Ok(match (frame, video) {
        (Some(f), Some(v)) => Some(total_contrast_loss(&f, &v)?),
        (f, v) => f.or(v),
    })
}

enum LabelMode<'s> {
    Cluster(usize),
    Store(&'s LabelStore),
}

fn contrast_epochs(
    setup: &Setup,
    backbone: &Backbone,
    mode: LabelMode,
    lr: f64,
    phase: u64,
    iteration: usize,
) -> Result<(Vec<f64>, f64, Vec<LabelSequence>)> {
    let cfg = &setup.train.contrast;
    let seed = setup.train.seed;
    let ids = setup.train_ids();
    let mut opt = adamw(backbone.vars(), lr, cfg.weight_decay)?;
    let name = if phase == PRETRAIN { "pretrain" } else { "contrast" };
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut last_clusters = Vec::new();
    for epoch in 0..cfg.epochs {
        let order = shuffled(&ids, seed, &[phase, iteration as u64, epoch as u64]);
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let path = [phase, iteration as u64, epoch as u64, b as u64];
            let w = sample_augment_window(setup.downsample, &mut rng::stream(seed, Stream::Augment, &path));
            let mut videos = Vec::with_capacity(chunk.len());
            for id in chunk {
                videos.push(downsampled(setup.dataset.video(id)?.0, w));
            }
            let labels: Vec<Vec<usize>> = match mode {
                LabelMode::Cluster(k) => {
                    let refs: Vec<&FeatureSequence> = videos.iter().collect();
                    let clusters = cluster_batch(&refs, k, &mut rng::stream(seed, Stream::Cluster, &path))?;
                    if epoch + 1 == cfg.epochs {
                        for (c, id) in clusters.iter().zip(chunk) {
                            let raw = setup.dataset.video(id)?.0.len();
                            last_clusters.push(LabelSequence::new(id.clone(), upsample_labels(&c.labels, w, raw), LabelSource::Cluster));
                        }
                    }
                    clusters.into_iter().map(|c| c.labels).collect()
                }
                LabelMode::Store(store) => chunk
                    .iter()
                    .map(|id| Ok(downsample_labels(&store.get(id)?.labels, w)))
                    .collect::<Result<_>>()?,
            };
            let decs = videos.iter().map(|v| backbone.forward(v)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
            let acts: Vec<Option<usize>> = videos.iter().map(|v| v.activity).collect();
            let mut sampler = rng::stream(seed, Stream::Sampler, &path);
            if let Some(loss) = contrast_terms(setup, &decs, &refs, &acts, &mut sampler)? {
                total += scalar(&loss)?;
                count += 1;
                opt.backward_step(&loss)?;
            }
        }
        let mean = if count > 0 { total / count as f64 } else { 0.0 };
        log_epoch(name, iteration, epoch + 1, mean);
        curve.push(mean);
    }
    last_clusters.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok((curve, opt.learning_rate(), last_clusters))
}

/// Contrastive training on cluster labels of the input features; updates the
/// backbone only.
pub fn pretrain_unsupervised(setup: &Setup, backbone: &Backbone) -> Result<PretrainOutcome> {
    let k = setup.contrast.clusters_for(setup.dataset.vocab.num_actions());
    let (loss_curve, _, cluster_labels) =
        contrast_epochs(setup, backbone, LabelMode::Cluster(k), setup.train.contrast.lr, PRETRAIN, 1)?;
    Ok(PretrainOutcome {
        loss_curve,
        cluster_labels,
    })
}

/// Contrastive training on the stored ground-truth and pseudo-labels. From
/// the second iteration on, the learning rate is scaled down.
pub fn contrast_step(setup: &Setup, backbone: &Backbone, store: &LabelStore, iteration: usize) -> Result<ContrastOutcome> {
    for id in setup.split.train_ids() {
        store.get(id)?;
    }
    let mut lr = setup.train.contrast.lr;
    if iteration >= 2 {
        lr *= setup.train.contrast_lr_decay_after_first;
    }
    let (loss_curve, lr, _) = contrast_epochs(setup, backbone, LabelMode::Store(store), lr, CONTRAST, iteration)?;
    Ok(ContrastOutcome { loss_curve, lr })
}

/// Mean negative log-probability of `targets` under row probabilities `probs`.
pub fn cross_entropy(probs: &Tensor, targets: &[usize]) -> Result<Tensor> {
    let n = targets.len();
    let y = Tensor::from_vec(targets.iter().map(|&t| t as u32).collect::<Vec<_>>(), (n, 1), probs.device())?;
    let p = probs.gather(&y, 1)?.clamp(1e-12, 1.0)?;
    Ok(p.log()?.mean_all()?.neg()?)
}

pub(crate) struct ClassifyPlan<'o> {
    pub ids: Vec<String>,
    pub heads_opt: &'o mut AdamW,
    pub backbone_opt: &'o mut AdamW,
    pub with_contrast: bool,
    pub phase: u64,
    pub name: &'static str,
}

pub(crate) fn classify_epochs(
    setup: &Setup,
    backbone: &Backbone,
    heads: &ClassifierHeads,
    plan: ClassifyPlan,
    iteration: usize,
) -> Result<Vec<f64>> {
    let cfg = &setup.train.classify_heads;
    let seed = setup.train.seed;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(&plan.ids, seed, &[plan.phase, iteration as u64, epoch as u64]);
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let path = [plan.phase, iteration as u64, epoch as u64, b as u64];
            let w = sample_augment_window(setup.downsample, &mut rng::stream(seed, Stream::Augment, &path));
            let mut videos = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for id in chunk {
                let (v, gt) = setup.dataset.video(id)?;
                videos.push(downsampled(v, w));
                labels.push(downsample_labels(&gt.labels, w));
            }
            let decs = videos.iter().map(|v| backbone.forward(v)).collect::<Result<Vec<_>>>()?;
            let mut probs = Vec::with_capacity(decs.len());
            for dec in &decs {
                probs.push(ensemble_probabilities(dec, heads, dec.padded_len)?.narrow(0, 0, dec.valid_len)?);
            }
            let targets: Vec<usize> = labels.iter().flatten().copied().collect();
            let mut loss = cross_entropy(&Tensor::cat(&probs, 0)?, &targets)?;
            if plan.with_contrast {
                let refs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
                let acts: Vec<Option<usize>> = videos.iter().map(|v| v.activity).collect();
                let mut sampler = rng::stream(seed, Stream::Sampler, &path);
                if let Some(con) = contrast_terms(setup, &decs, &refs, &acts, &mut sampler)? {
                    loss = (loss + con)?;
                }
            }
            total += scalar(&loss)?;
            count += 1;
            let grads = loss.backward()?;
            plan.heads_opt.step(&grads)?;
            plan.backbone_opt.step(&grads)?;
        }
        let mean = total / count.max(1) as f64;
        log_epoch(plan.name, iteration, epoch + 1, mean);
        curve.push(mean);
    }
    Ok(curve)
}

/// Cross-entropy on the ensemble prediction plus the contrastive loss with
/// ground-truth labels, over labeled videos only. Heads and backbone use
/// separate learning rates.
pub fn classify_step(setup: &Setup, backbone: &Backbone, heads: &ClassifierHeads, iteration: usize) -> Result<Vec<f64>> {
    if setup.split.labeled_ids.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let cfg = &setup.train.classify_heads;
    let mut heads_opt = adamw(heads.vars(), cfg.lr, cfg.weight_decay)?;
    let mut backbone_opt = adamw(backbone.vars(), setup.train.classify_backbone_lr, cfg.weight_decay)?;
    let plan = ClassifyPlan {
        ids: setup.split.labeled_ids.iter().cloned().collect(),
        heads_opt: &mut heads_opt,
        backbone_opt: &mut backbone_opt,
        with_contrast: true,
        phase: CLASSIFY,
        name: "classify",
    };
    classify_epochs(setup, backbone, heads, plan, iteration)
}

/// Supervised-only training with cross-entropy; used by the baseline.
pub(crate) fn supervised_epochs(setup: &Setup, backbone: &Backbone, heads: &ClassifierHeads) -> Result<Vec<f64>> {
    if setup.split.labeled_ids.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let cfg = &setup.train.classify_heads;
    let mut heads_opt = adamw(heads.vars(), cfg.lr, cfg.weight_decay)?;
    let mut backbone_opt = adamw(backbone.vars(), setup.train.contrast.lr, setup.train.contrast.weight_decay)?;
    let plan = ClassifyPlan {
        ids: setup.split.labeled_ids.iter().cloned().collect(),
        heads_opt: &mut heads_opt,
        backbone_opt: &mut backbone_opt,
        with_contrast: false,
        phase: SUPERVISED,
        name: "supervised",
    };
    classify_epochs(setup, backbone, heads, plan, 0)
}

/// Predict every video in `ids` and store the result as pseudo-labels.
/// Refused, with the store untouched, if any id is a labeled video.
pub fn generate_pseudo_labels(
    setup: &Setup,
    backbone: &Backbone,
    heads: &ClassifierHeads,
    store: &mut LabelStore,
    ids: &[String],
) -> Result<()> {
    if let Some(id) = ids.iter().find(|id| store.is_labeled(id)) {
        return Err(Error::Refused(format!("{id} is labeled; its ground truth is kept")));
    }
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let (video, _) = setup.dataset.video(id)?;
        let labels = predict_video(backbone, heads, video, setup.downsample.w0)?;
        out.push(LabelSequence::new(id.clone(), labels, LabelSource::Pseudo));
    }
    store.set_pseudo(out)
}
