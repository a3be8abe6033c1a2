//! Command-line front end.

use std::path::{Path, PathBuf};

use candle_core::DType;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::data::{io, make_split, missing_actions, synth_generate, Dataset, DatasetSplit, LabelSequence};
use crate::error::Error;
use crate::icc::{evaluate, pretrain_unsupervised, run_icc, supervised_baseline, IccOptions, Setup};
use crate::metrics::{linear_evaluation, Representation};
use crate::network::{Backbone, Checkpoint};

#[derive(Debug, Parser)]
#[command(name = "icc-seg", version, about = "Contrastive pretraining and iterative contrast-classify training for action segmentation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (relative paths are placed under $ICC_SEG_OUTPUT_ROOT).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    SynthGen(SynthArgs),
    /// Unsupervised contrastive pretraining.
    Pretrain(PretrainArgs),
    /// Iterative contrast-classify training.
    Icc(IccArgs),
    /// Score a checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub num_actions: Option<usize>,
    #[arg(long)]
    pub num_activities: Option<usize>,
    #[arg(long)]
    pub videos_per_activity: Option<usize>,
    #[arg(long)]
    pub frame_dim: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub labeled_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IccArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub labeled_fraction: Option<f64>,
    /// Start from an untrained backbone instead of contrastive pretraining.
    #[arg(long)]
    pub skip_pretrain: bool,
    /// Contrast epochs per iteration.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub classify_epochs: Option<usize>,
    /// Linear-probe the representation after every iteration.
    #[arg(long)]
    pub probe: bool,
    /// Also train the supervised-only baseline on the same labeled videos.
    #[arg(long)]
    pub baseline: bool,
    /// Ignore checkpoints left by an earlier run in the output directory.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalSet {
    Test,
    Train,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fit and score a linear probe on the frozen representation.
    #[arg(long)]
    pub probe: bool,
    /// With --probe, probe the raw input features instead.
    #[arg(long, requires = "probe")]
    pub raw: bool,
    /// Videos to score.
    #[arg(long, value_enum, default_value = "test")]
    pub on: EvalSet,
    /// Permit scoring videos the model was trained on.
    #[arg(long)]
    pub allow_train_eval: bool,
}

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Refused(_)) | CliError::Core(Error::Config(_)) => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(_) => 4,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn base_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) if !path.is_file() => return Err(CliError::Usage(format!("config file not found: {}", path.display()))),
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dataset_dir(cfg: &mut RunConfig, flag: &Option<PathBuf>) -> CliResult<PathBuf> {
    if let Some(d) = flag {
        cfg.dataset = Some(d.clone());
    }
    let dir = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("no dataset given (use --data or set `dataset` in the config)".into()))?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("dataset directory not found: {}", dir.display())));
    }
    Ok(dir)
}

fn prepare_output(cfg: &RunConfig) -> CliResult<PathBuf> {
    let out = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    cfg.write_snapshot(&out)?;
    Ok(out)
}

fn load_for_training(cfg: &mut RunConfig, data: &Option<PathBuf>) -> CliResult<(Dataset, DatasetSplit)> {
    let dir = dataset_dir(cfg, data)?;
    let dataset = io::load_dataset(&dir)?;
    if cfg.backbone.input_dim == 0 {
        cfg.backbone.input_dim = dataset.input_dim();
    }
    cfg.sync();
    cfg.validate()?;
    let split = make_split(&dataset.train_ids(), cfg.split.labeled_fraction, cfg.seed, cfg.split.min_labeled)?;
    let missing = missing_actions(&split, &dataset.labels, dataset.vocab.num_actions());
    if !missing.is_empty() {
        log::warn!("labeled videos do not cover actions {missing:?}");
    }
    Ok((dataset, split))
}

fn setup<'a>(cfg: &'a RunConfig, dataset: &'a Dataset, split: &'a DatasetSplit) -> Setup<'a> {
    Setup {
        dataset,
        split,
        contrast: &cfg.contrast,
        downsample: &cfg.downsample,
        train: &cfg.train,
    }
}

fn write_loss_csv(path: &Path, curve: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["epoch", "mean_loss"]).map_err(Error::from)?;
    for (e, l) in curve.iter().enumerate() {
        w.write_record([(e + 1).to_string(), format!("{l:.6}")]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn cmd_synth_gen(cli: &Cli, args: &SynthArgs) -> CliResult<()> {
    let mut cfg = base_config(cli)?;
    let s = &mut cfg.synth;
    if let Some(v) = args.num_actions {
        s.num_actions = v;
    }
    if let Some(v) = args.num_activities {
        s.num_activities = v;
    }
    if let Some(v) = args.videos_per_activity {
        s.videos_per_activity = v;
    }
    if let Some(v) = args.frame_dim {
        s.frame_dim = v;
    }
    if let Some(v) = args.noise_scale {
        s.noise_scale = v;
    }
    if let Some(v) = args.labeled_fraction {
        cfg.split.labeled_fraction = v;
    }
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
    }
    cfg.sync();
    let dataset = synth_generate(&cfg.synth)?.into_dataset()?;
    let split = make_split(&dataset.train_ids(), cfg.split.labeled_fraction, cfg.seed, cfg.split.min_labeled)?;
    let out = prepare_output(&cfg)?;
    io::save_dataset(&out, &dataset, &split)?;
    println!("wrote {} videos to {}", dataset.features.len(), out.display());
    Ok(())
}

fn cmd_pretrain(cli: &Cli, args: &PretrainArgs) -> CliResult<()> {
    let mut cfg = base_config(cli)?;
    if let Some(e) = args.epochs {
        cfg.train.contrast.epochs = e;
    }
    let (dataset, split) = load_for_training(&mut cfg, &args.data)?;
    let out = prepare_output(&cfg)?;
    io::write_split(&out.join("split"), &split, &dataset.test_ids)?;
    let backbone = Backbone::new(cfg.backbone.clone(), cfg.seed, DType::F32)?;
    let outcome = pretrain_unsupervised(&setup(&cfg, &dataset, &split), &backbone)?;
    let ck = Checkpoint::capture(
        &backbone,
        None,
        None,
        cfg.seed,
        vec!["init".into(), "cluster".into(), "sampler".into(), "augment".into(), "shuffle".into()],
        serde_json::json!({ "loss_curve": outcome.loss_curve }),
    )?;
    let path = out.join("ckpt").join("pretrain.bin");
    ck.save(&path)?;
    write_loss_csv(&out.join("pretrain_loss.csv"), &outcome.loss_curve)?;
    println!("checkpoint {}", path.display());
    Ok(())
}

fn cmd_icc(cli: &Cli, args: &IccArgs) -> CliResult<()> {
    let mut cfg = base_config(cli)?;
    if let Some(n) = args.iterations {
        cfg.train.icc_iterations = n;
    }
    if let Some(f) = args.labeled_fraction {
        cfg.split.labeled_fraction = f;
    }
    if let Some(e) = args.epochs {
        cfg.train.contrast.epochs = e;
    }
    if let Some(e) = args.classify_epochs {
        cfg.train.classify_heads.epochs = e;
    }
    cfg.probe_each_iteration |= args.probe;
    let (dataset, split) = load_for_training(&mut cfg, &args.data)?;
    let out = prepare_output(&cfg)?;
    io::write_split(&out.join("split"), &split, &dataset.test_ids)?;
    let ckpt_dir = out.join("ckpt");
    if args.fresh && ckpt_dir.is_dir() {
        std::fs::remove_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    }
    let options = IccOptions {
        skip_pretrain: args.skip_pretrain,
        checkpoint_dir: Some(ckpt_dir),
        resume: true,
        probe: cfg.probe_each_iteration.then(|| cfg.probe.clone()),
        fingerprint: Some(fingerprint(&cfg, args.skip_pretrain)?),
    };
    let s = setup(&cfg, &dataset, &split);
    let run = run_icc(&s, &cfg.backbone, &options)?;
    run.history.write_csv(&out.join("history.csv"))?;
    let last = run.history.last().expect("at least one iteration");
    last.report.write_csv(&out.join("report.csv"))?;
    last.report.write_per_video_csv(&out.join("per_video.csv"))?;
    println!("{}", last.report);
    if args.baseline {
        let base = supervised_baseline(&s, &cfg.backbone)?;
        base.report.write_csv(&out.join("baseline_report.csv"))?;
        println!("supervised baseline\n{}", base.report);
    }
    Ok(())
}

/// Settings a resumed run must share with the run that wrote the checkpoints.
fn fingerprint(cfg: &RunConfig, skip_pretrain: bool) -> CliResult<String> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    Ok(format!("{}skip_pretrain={skip_pretrain}", c.to_toml()?))
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> CliResult<()> {
    let mut cfg = base_config(cli)?;
    if !args.checkpoint.is_file() {
        return Err(CliError::Usage(format!("checkpoint not found: {}", args.checkpoint.display())));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let dir = dataset_dir(&mut cfg, &args.data)?;
    let dataset = io::load_dataset(&dir)?;
    cfg.backbone = ck.backbone.clone();
    cfg.sync();
    if args.on == EvalSet::Train && !args.allow_train_eval {
        return Err(CliError::Core(Error::Refused(
            "these videos were used for training; pass --allow-train-eval to score them anyway".into(),
        )));
    }
    let backbone = ck.restore_backbone(DType::F32)?;
    let out = prepare_output(&cfg)?;
    let report = if args.probe {
        let train: Vec<LabelSequence> = dataset.train_ids().iter().map(|id| Ok(dataset.video(id)?.1.clone())).collect::<crate::Result<_>>()?;
        let mut probe_cfg = cfg.probe.clone();
        if args.raw {
            probe_cfg.representation = Representation::Raw;
        }
        linear_evaluation(Some(&backbone), &dataset, &train, &probe_cfg)?.report
    } else {
        let heads = ck
            .restore_heads(DType::F32)?
            .ok_or_else(|| CliError::Usage("checkpoint has no classifier heads; use --probe".into()))?;
        let ids = match args.on {
            EvalSet::Test => dataset.test_ids(),
            EvalSet::Train => dataset.train_ids(),
        };
        evaluate(&backbone, &heads, &dataset, &ids, cfg.downsample.w0)?
    };
    report.write_csv(&out.join("eval_report.csv"))?;
    report.write_per_video_csv(&out.join("eval_per_video.csv"))?;
    println!("{report}");
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::SynthGen(a) => cmd_synth_gen(cli, a),
        Command::Pretrain(a) => cmd_pretrain(cli, a),
        Command::Icc(a) => cmd_icc(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
    }
}

