use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use super::train::{supervised_epochs, CLASSIFY, SUPERVISED};
use super::{classify_step, contrast_step, generate_pseudo_labels, pretrain_unsupervised, IccHistory, IccRecord, LabelStore, Setup};
use crate::data::{downsample_features, upsample_labels, Dataset, FeatureSequence, LabelSequence};
use crate::error::{Error, Result};
use crate::metrics::{linear_evaluation, LinearEvalConfig, MetricReport};
use crate::network::{array_to_tensor, predict_ensemble, Backbone, BackboneConfig, Checkpoint, ClassifierHeads};
use crate::rng::{self, Stream};

/// Frame labels for one video at input resolution: features are pooled with
/// window `w0`, the ensemble prediction is taken at that resolution and
/// repeated back over each window.
pub fn predict_video(backbone: &Backbone, heads: &ClassifierHeads, video: &FeatureSequence, w0: usize) -> Result<Vec<usize>> {
    let x = array_to_tensor(&downsample_features(&video.data, w0), backbone.dtype())?;
    let dec = backbone.forward_tensor(&x)?;
    let (_, labels) = predict_ensemble(&dec, heads, dec.padded_len)?;
    Ok(upsample_labels(&labels.labels[..dec.valid_len], w0, video.len()))
}

/// Segmentation metrics of the head prediction on `ids`.
pub fn evaluate(backbone: &Backbone, heads: &ClassifierHeads, dataset: &Dataset, ids: &[String], w0: usize) -> Result<MetricReport> {
    let mut results = Vec::with_capacity(ids.len());
    for id in ids {
        let (video, gt) = dataset.video(id)?;
        results.push((id.as_str(), predict_video(backbone, heads, video, w0)?, gt.labels.as_slice()));
    }
    MetricReport::evaluate(results.iter().map(|(id, p, g)| (*id, p.as_slice(), *g)))
}

#[derive(Debug, Clone, Default)]
pub struct IccOptions {
    /// Start the first iteration from the untrained backbone.
    pub skip_pretrain: bool,
    /// Where `icc_<i>.bin` checkpoints go; none are written when unset.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from the latest checkpoint in `checkpoint_dir`.
    pub resume: bool,
    /// Run a linear probe on the representation after every iteration.
    pub probe: Option<LinearEvalConfig>,
    /// Settings a resumed run must match; stored in every checkpoint.
    pub fingerprint: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Progress {
    iteration: usize,
    fingerprint: Option<String>,
    store: LabelStore,
    history: IccHistory,
}

/// Model and bookkeeping after the final iteration.
#[derive(Debug)]
pub struct IccRun {
    pub history: IccHistory,
    pub backbone: Backbone,
    pub heads: ClassifierHeads,
    pub store: LabelStore,
    pub pretrain_loss: Vec<f64>,
}

pub fn checkpoint_path(dir: &Path, iteration: usize) -> PathBuf {
    dir.join(format!("icc_{iteration}.bin"))
}

fn latest_checkpoint(dir: &Path, max_iter: usize) -> Option<(usize, PathBuf)> {
    (1..=max_iter).rev().map(|i| (i, checkpoint_path(dir, i))).find(|(_, p)| p.is_file())
}

fn lineage() -> Vec<String> {
    ["split", "init", "cluster", "sampler", "augment", "shuffle"].map(String::from).to_vec()
}

/// Iterative contrast-classify training.
///
/// Iteration 1 opens with unsupervised pretraining (unless skipped), later
/// iterations with a contrast step on pseudo- and ground-truth labels. Each
/// iteration then re-initializes the heads, runs the classify step, scores
/// the test split and, unless it is the last, pseudo-labels the unlabeled
/// videos.
pub fn run_icc(setup: &Setup, config: &BackboneConfig, options: &IccOptions) -> Result<IccRun> {
    setup.validate()?;
    let seed = setup.train.seed;
    let iterations = setup.train.icc_iterations;
    let num_actions = setup.dataset.vocab.num_actions();
    let test_ids = setup.dataset.test_ids();
    let unlabeled: Vec<String> = setup.split.unlabeled_ids.iter().cloned().collect();

    let mut backbone = Backbone::new(config.clone(), seed, DType::F32)?;
    let mut store = LabelStore::new(setup.dataset, setup.split)?;
    let mut history = IccHistory::default();
    let mut heads = None;
    let mut start = 1;
    if let (true, Some(dir)) = (options.resume, &options.checkpoint_dir) {
        if let Some((i, path)) = latest_checkpoint(dir, iterations) {
            let ck = Checkpoint::load(&path)?;
            if &ck.backbone != config || ck.seed != seed {
                return Err(Error::Refused(format!("{} was written by a different configuration", path.display())));
            }
            let progress: Progress = serde_json::from_value(ck.extra.clone())?;
            if progress.fingerprint != options.fingerprint {
                return Err(Error::Refused(format!("{} was written with different settings", path.display())));
            }
            backbone = ck.restore_backbone(DType::F32)?;
            heads = ck.restore_heads(DType::F32)?;
            store = progress.store;
            history = progress.history;
            start = i + 1;
            log::info!("resuming after iteration {i} from {}", path.display());
        }
    }

    let mut pretrain_loss = Vec::new();
    for i in start..=iterations {
        let clock = Instant::now();
        let contrast_loss = if i == 1 {
            if options.skip_pretrain {
                Vec::new()
            } else {
                let out = pretrain_unsupervised(setup, &backbone)?;
                store.record_clusters(out.cluster_labels);
                pretrain_loss = out.loss_curve.clone();
                out.loss_curve
            }
        } else {
            contrast_step(setup, &backbone, &store, i)?.loss_curve
        };

        let h = ClassifierHeads::new(
            &config.latent_dim_per_layer,
            num_actions,
            setup.train.alpha.clone(),
            seed,
            &[CLASSIFY, i as u64],
            DType::F32,
        )?;
        let classify_loss = classify_step(setup, &backbone, &h, i)?;
        let report = evaluate(&backbone, &h, setup.dataset, &test_ids, setup.downsample.w0)?;
        let probe_mof = match &options.probe {
            Some(cfg) => {
                let train: Vec<LabelSequence> = setup
                    .split
                    .train_ids()
                    .map(|id| Ok(setup.dataset.video(id)?.1.clone()))
                    .collect::<Result<_>>()?;
                Some(linear_evaluation(Some(&backbone), setup.dataset, &train, cfg)?.report.mof)
            }
            None => None,
        };
        if i < iterations {
            generate_pseudo_labels(setup, &backbone, &h, &mut store, &unlabeled)?;
        }
        let checkpoint = options.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, i));
        log::info!(
            "{}",
            serde_json::json!({"phase": "evaluate", "iteration": i, "mof": report.mof, "edit": report.edit, "f1_10": report.f1_10})
        );
        history.push(IccRecord {
            iteration: i,
            contrast_loss,
            classify_loss,
            report,
            probe_mof,
            checkpoint: checkpoint.clone(),
            wall_seconds: clock.elapsed().as_secs_f64(),
        });
        if let Some(path) = checkpoint {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let progress = Progress {
                iteration: i,
                fingerprint: options.fingerprint.clone(),
                store: store.clone(),
                history: history.clone(),
            };
            Checkpoint::capture(&backbone, Some(&h), None, seed, lineage(), serde_json::to_value(&progress)?)?.save(&path)?;
        }
        heads = Some(h);
    }
    let heads = heads.ok_or_else(|| Error::BadSpec("no iteration was run".into()))?;
    Ok(IccRun {
        history,
        backbone,
        heads,
        store,
        pretrain_loss,
    })
}

#[derive(Debug)]
pub struct SupervisedBaseline {
    pub backbone: Backbone,
    pub heads: ClassifierHeads,
    pub loss_curve: Vec<f64>,
    pub report: MetricReport,
}

/// A fresh model trained with cross-entropy on the labeled videos only.
pub fn supervised_baseline(setup: &Setup, config: &BackboneConfig) -> Result<SupervisedBaseline> {
    setup.validate()?;
    let seed = rng::child_seed(setup.train.seed, Stream::Init, &[SUPERVISED]);
    let backbone = Backbone::new(config.clone(), seed, DType::F32)?;
    let heads = ClassifierHeads::new(
        &config.latent_dim_per_layer,
        setup.dataset.vocab.num_actions(),
        setup.train.alpha.clone(),
        seed,
        &[SUPERVISED],
        DType::F32,
    )?;
    let loss_curve = supervised_epochs(setup, &backbone, &heads)?;
    let report = evaluate(&backbone, &heads, setup.dataset, &setup.dataset.test_ids(), setup.downsample.w0)?;
    Ok(SupervisedBaseline {
        backbone,
        heads,
        loss_curve,
        report,
    })
}
