//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Expensive training runs are shared and
//! repeated once for the determinism check.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use icc_seg::contrastive::{
    build_sets, frame_contrast_loss, sample_frames, total_contrast_loss, video_contrast_loss, ContrastConfig,
    ContrastSets, SampleIndex,
};
use icc_seg::data::{make_split, synth_generate, Dataset, DatasetSplit, DownsampleConfig, LabelSequence, SynthSpec};
use icc_seg::icc::{pretrain_unsupervised, run_icc, supervised_baseline, IccHistory, IccOptions, Setup, TrainConfig};
use icc_seg::metrics::{edit_score, f1_at, linear_evaluation, mof, LinearEvalConfig, MetricReport, Representation};
use icc_seg::network::{
    cosine, multires_feature, to_rows_f64, Backbone, BackboneConfig, NormOrder, UpsampleMode,
};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn criterion(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let o = Outcome {
        name,
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    };
    println!(
        "{} {} ({:.1}s): {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.name,
        o.seconds,
        o.detail
    );
    o
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- geometry

fn random_backbone(input_dim: usize, seed: u64) -> Backbone {
    let cfg = BackboneConfig::desk(input_dim);
    Backbone::new(cfg, seed, DType::F64).unwrap()
}

fn random_input(t: usize, d: usize, r: &mut ChaCha8Rng) -> Tensor {
    let v: Vec<f64> = (0..t * d).map(|_| r.random_range(-2.0..2.0)).collect();
    Tensor::from_vec(v, (t, d), &Device::Cpu).unwrap()
}

/// Per-frame multires rows plus, per frame and layer, the raw decoder row.
fn features_and_layers(b: &Backbone, x: &Tensor, mode: UpsampleMode) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let dec = b.forward_tensor(x).unwrap();
    let t = dec.valid_len;
    let f = multires_feature(&dec, dec.padded_len, mode).unwrap();
    let rows = to_rows_f64(&f.valid().unwrap()).unwrap();
    // layer u at frame t, resampled independently of the library code
    let mut layers = vec![Vec::new(); t];
    for z in &dec.z {
        let zr = to_rows_f64(z).unwrap();
        let l = zr.len();
        for (frame, out) in layers.iter_mut().enumerate() {
            let row = match mode {
                UpsampleMode::Nearest => zr[frame * l / dec.padded_len].clone(),
                UpsampleMode::Linear => {
                    let src = ((frame as f64 + 0.5) * l as f64 / dec.padded_len as f64 - 0.5).max(0.0);
                    let lo = (src.floor() as usize).min(l - 1);
                    let hi = (lo + 1).min(l - 1);
                    let w = if hi == lo { 0.0 } else { src - lo as f64 };
                    zr[lo].iter().zip(&zr[hi]).map(|(a, b)| a * (1.0 - w) + b * w).collect()
                }
            };
            out.push(row);
        }
    }
    (rows, layers)
}

fn decomposition() -> (bool, String) {
    let mut r = rng(11);
    let (mut pairs, mut worst) = (0usize, 0f64);
    for pass in 0..10 {
        let t = [64, 57, 100, 33, 80][pass % 5];
        let mode = if pass % 2 == 0 { UpsampleMode::Nearest } else { UpsampleMode::Linear };
        let b = random_backbone(6, 100 + pass as u64);
        let (rows, layers) = features_and_layers(&b, &random_input(t, 6, &mut r), mode);
        for a in 0..t {
            for c in a + 1..t {
                let lhs = cosine(&rows[a], &rows[c]);
                let rhs = layers[a].iter().zip(&layers[c]).map(|(x, y)| cosine(x, y)).sum::<f64>() / 6.0;
                worst = worst.max((lhs - rhs).abs());
                pairs += 1;
            }
        }
    }
    (pairs >= 10_000 && worst < 1e-6, format!("{pairs} pairs, max deviation {worst:.2e}"))
}

fn continuity() -> (bool, String) {
    let mut r = rng(12);
    let b = random_backbone(6, 5);
    let (rows, _) = features_and_layers(&b, &random_input(64, 6, &mut r), UpsampleMode::Nearest);
    let (mut checked, mut violations, mut slack) = (0usize, 0usize, f64::INFINITY);
    for u in 0..6u32 {
        let bound = 1.0 - u as f64 / 3.0;
        for t in 0..64usize {
            for s in t + 1..64 {
                if t >> u != s >> u {
                    continue;
                }
                let c = cosine(&rows[t], &rows[s]);
                checked += 1;
                slack = slack.min(c - bound);
                // cos is computed in floating point; 1e-12 absorbs rounding
                if c < bound - 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    (
        violations == 0 && checked > 0,
        format!("{checked} (pair, u) checks, {violations} violations, min margin {slack:.3e}"),
    )
}

// --------------------------------------------------------------- gradients

fn scalar(t: &Tensor) -> f64 {
    t.to_scalar::<f64>().unwrap()
}

/// Relative error `|fd - g| / |g|` over all coordinates of `inputs`.
fn gradient_error(inputs: &[Tensor], loss: impl Fn(&[Tensor]) -> Tensor) -> f64 {
    let vars: Vec<Var> = inputs.iter().map(|t| Var::from_tensor(t).unwrap()).collect();
    let ts: Vec<Tensor> = vars.iter().map(|v| v.as_tensor().clone()).collect();
    let grads = loss(&ts).backward().unwrap();
    let h = 1e-4;
    let (mut diff, mut norm) = (0.0, 0.0);
    for (n, v) in vars.iter().enumerate() {
        let g: Vec<f64> = match grads.get(v.as_tensor()) {
            Some(g) => g.flatten_all().unwrap().to_vec1().unwrap(),
            None => vec![0.0; inputs[n].elem_count()],
        };
        let base: Vec<f64> = inputs[n].flatten_all().unwrap().to_vec1().unwrap();
        for i in 0..base.len() {
            let at = |delta: f64| {
                let mut p = base.clone();
                p[i] += delta;
                let mut xs = inputs.to_vec();
                xs[n] = Tensor::from_vec(p, inputs[n].dims(), &Device::Cpu).unwrap();
                scalar(&loss(&xs))
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            diff += (fd - g[i]).powi(2);
            norm += g[i].powi(2);
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

struct FrameCase {
    feats: Vec<Tensor>,
    sets: ContrastSets,
    activities: Vec<usize>,
    tau: f64,
}

fn frame_case(r: &mut ChaCha8Rng) -> FrameCase {
    loop {
        let n = r.random_range(2..=4);
        let d = r.random_range(3..=8);
        let k = r.random_range(2..=5);
        let cfg = ContrastConfig {
            delta: r.random_range(0.1..0.8),
            ..ContrastConfig::with_k(k)
        };
        let mut feats = Vec::new();
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut acts = Vec::new();
        for v in 0..n {
            let t = r.random_range(4..=14);
            let x: Vec<f64> = (0..t * d).map(|_| r.random_range(-1.0..1.0)).collect();
            feats.push(Tensor::from_vec(x, (t, d), &Device::Cpu).unwrap());
            samples.push(sample_frames(v, t, &cfg, r));
            labels.push((0..t).map(|_| r.random_range(0..3)).collect::<Vec<usize>>());
            acts.push(r.random_range(0..2));
        }
        let refs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
        let opt: Vec<Option<usize>> = acts.iter().map(|&a| Some(a)).collect();
        let sets = build_sets(&samples, &refs, &opt, &cfg);
        let video_ok = acts.iter().any(|&a| a != acts[0]) && acts.iter().enumerate().any(|(i, a)| acts[i + 1..].contains(a));
        if frame_contrast_loss(&feats, &sets, 0.1).is_ok() && video_ok {
            let tau = [0.1, 0.3, 1.0][r.random_range(0..3)];
            return FrameCase {
                feats,
                sets,
                activities: acts,
                tau,
            };
        }
    }
}

fn summaries(feats: &[Tensor]) -> Tensor {
    let rows: Vec<Tensor> = feats.iter().map(|f| f.max(0).unwrap()).collect();
    Tensor::stack(&rows, 0).unwrap()
}

fn gradients() -> (bool, String) {
    let mut r = rng(13);
    let configs = 24;
    let (mut frame_worst, mut video_worst, mut total_worst) = (0f64, 0f64, 0f64);
    for _ in 0..configs {
        let c = frame_case(&mut r);
        let frame = |xs: &[Tensor]| frame_contrast_loss(xs, &c.sets, c.tau).unwrap().loss;
        frame_worst = frame_worst.max(gradient_error(&c.feats, frame));

        let summ = summaries(&c.feats);
        let video = |xs: &[Tensor]| video_contrast_loss(&xs[0], &c.activities, c.tau).unwrap().loss;
        video_worst = video_worst.max(gradient_error(std::slice::from_ref(&summ), video));

        // combined loss, with the video summary taken from the frame features
        let total = |xs: &[Tensor]| {
            let f = frame_contrast_loss(xs, &c.sets, c.tau).unwrap().loss;
            let v = video_contrast_loss(&summaries(xs), &c.activities, c.tau).unwrap().loss;
            total_contrast_loss(&f, &v).unwrap()
        };
        total_worst = total_worst.max(gradient_error(&c.feats, total));
    }
    let worst = frame_worst.max(video_worst).max(total_worst);
    (
        worst < 1e-4,
        format!("{configs} configs, max relative error frame {frame_worst:.2e} video {video_worst:.2e} combined {total_worst:.2e}"),
    )
}

// ----------------------------------------------------------------- metrics

/// (label, first frame, one past last frame) by a plain frame scan.
fn runs(x: &[usize]) -> Vec<(usize, usize, usize)> {
    let mut out: Vec<(usize, usize, usize)> = Vec::new();
    for (t, &l) in x.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 = t + 1,
            _ => out.push((l, t, t + 1)),
        }
    }
    out
}

fn oracle_mof(p: &[usize], g: &[usize]) -> f64 {
    let mut hit = 0;
    for t in 0..g.len() {
        if p[t] == g[t] {
            hit += 1;
        }
    }
    100.0 * hit as f64 / g.len() as f64
}

fn edit_distance(a: &[usize], b: &[usize], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&v) = memo.get(&(a.len(), b.len())) {
        return v;
    }
    let cost = usize::from(a[a.len() - 1] != b[b.len() - 1]);
    let v = (edit_distance(&a[..a.len() - 1], b, memo) + 1)
        .min(edit_distance(a, &b[..b.len() - 1], memo) + 1)
        .min(edit_distance(&a[..a.len() - 1], &b[..b.len() - 1], memo) + cost);
    memo.insert((a.len(), b.len()), v);
    v
}

fn oracle_edit(p: &[usize], g: &[usize]) -> f64 {
    let ps: Vec<usize> = runs(p).iter().map(|s| s.0).collect();
    let gs: Vec<usize> = runs(g).iter().map(|s| s.0).collect();
    let d = edit_distance(&ps, &gs, &mut HashMap::new());
    (100.0 * (1.0 - d as f64 / ps.len().max(gs.len()) as f64)).max(0.0)
}

/// Frame-set IoU matching; returns (tp, fp, fn).
fn oracle_counts(p: &[usize], g: &[usize], threshold: f64) -> (usize, usize, usize) {
    let ps = runs(p);
    let gs = runs(g);
    let mut taken = vec![false; gs.len()];
    let (mut tp, mut fp) = (0, 0);
    for &(pl, ps_, pe) in &ps {
        let mut best: Option<(usize, f64)> = None;
        for (j, &(gl, gs_, ge)) in gs.iter().enumerate() {
            if taken[j] || gl != pl {
                continue;
            }
            let inter = (ps_..pe).filter(|t| (gs_..ge).contains(t)).count();
            let union = (ps_.min(gs_)..pe.max(ge)).filter(|t| (ps_..pe).contains(t) || (gs_..ge).contains(t)).count();
            let iou = inter as f64 / union as f64;
            // integer cross-multiplication decides the threshold exactly
            if inter * 100 * 1000 < (threshold * 1000.0).round() as usize * union {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, _)) => {
                taken[j] = true;
                tp += 1;
            }
            None => fp += 1,
        }
    }
    (tp, fp, taken.iter().filter(|x| !**x).count())
}

fn oracle_f1(p: &[usize], g: &[usize], threshold: f64) -> f64 {
    let (tp, fp, fn_) = oracle_counts(p, g, threshold);
    let prec = if tp + fp == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fp) as f64 };
    let rec = if tp + fn_ == 0 { 0.0 } else { 100.0 * tp as f64 / (tp + fn_) as f64 };
    if prec + rec == 0.0 {
        0.0
    } else {
        2.0 * prec * rec / (prec + rec)
    }
}

/// Labels with at most `max_segments` runs over `a` actions.
fn random_labels(r: &mut ChaCha8Rng, t: usize, a: usize, max_segments: usize) -> Vec<usize> {
    let k = r.random_range(1..=max_segments.min(t));
    let mut cuts: Vec<usize> = (1..t).collect();
    for i in 0..cuts.len() {
        let j = r.random_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts: Vec<usize> = cuts[..k - 1].to_vec();
    cuts.sort();
    let mut out = Vec::with_capacity(t);
    let mut label = r.random_range(0..a);
    let mut next = cuts.into_iter().peekable();
    for frame in 0..t {
        if next.peek() == Some(&frame) {
            next.next();
            label = r.random_range(0..a);
        }
        out.push(label);
    }
    out
}

fn metric_oracles() -> (bool, String) {
    let mut r = rng(14);
    let mut mismatches = Vec::new();
    let pairs = 200;
    for i in 0..pairs {
        let t = r.random_range(1..=64);
        let a = r.random_range(1..=4);
        let g = random_labels(&mut r, t, a, 12);
        // half the predictions are perturbations of the ground truth, so
        // high-IoU matches get exercised too
        let p = if i % 2 == 0 {
            random_labels(&mut r, t, a, 12)
        } else {
            let mut p = g.clone();
            let shift = r.random_range(0..=3);
            for f in (shift..t).rev() {
                p[f] = p[f - shift];
            }
            p
        };
        if mof(&p, &g).unwrap() != oracle_mof(&p, &g) {
            mismatches.push(format!("mof #{i}"));
        }
        if edit_score(&p, &g).unwrap() != oracle_edit(&p, &g) {
            mismatches.push(format!("edit #{i}"));
        }
        for th in [10.0, 25.0, 50.0, 75.0] {
            if f1_at(&p, &g, th).unwrap().2 != oracle_f1(&p, &g, th) {
                mismatches.push(format!("f1@{th} #{i}"));
            }
        }
    }
    (
        mismatches.is_empty(),
        format!("{pairs} pairs, {} mismatches {:?}", mismatches.len(), &mismatches[..mismatches.len().min(5)]),
    )
}

// -------------------------------------------------------- set construction

fn enumerate_sets(
    samples: &[Vec<SampleIndex>],
    labels: &[Vec<usize>],
    activities: &[Option<usize>],
    delta: f64,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let flat: Vec<&SampleIndex> = samples.iter().flatten().collect();
    let with_acts = activities.iter().all(Option::is_some);
    let mut pos = vec![Vec::new(); flat.len()];
    let mut neg = vec![Vec::new(); flat.len()];
    for (i, a) in flat.iter().enumerate() {
        for (j, b) in flat.iter().enumerate() {
            if i == j {
                continue;
            }
            let same_c = !with_acts || activities[a.video] == activities[b.video];
            let same_l = labels[a.video][a.frame] == labels[b.video][b.frame];
            let close = (a.time - b.time).abs() <= delta;
            let in_p = same_c && close && same_l;
            let in_n = !same_c || !same_l;
            assert!(!(in_p && in_n));
            if in_p {
                pos[i].push(j);
            }
            if in_n {
                neg[i].push(j);
            }
        }
    }
    (pos, neg)
}

fn set_construction() -> (bool, String) {
    let mut r = rng(15);
    let (mut batches, mut neither, mut bad) = (0usize, 0usize, 0usize);
    for _ in 0..500 {
        let n = r.random_range(1..=4);
        let k = r.random_range(1..=6);
        let cfg = ContrastConfig {
            delta: [0.0, 0.1, 0.25, 0.5, 1.0][r.random_range(0..5)],
            ..ContrastConfig::with_k(k)
        };
        let with_acts = r.random_bool(0.7);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut acts = Vec::new();
        for v in 0..n {
            let t = r.random_range(1..=20);
            let mut s = sample_frames(v, t, &cfg, &mut r);
            // snap some times to a coarse grid so |dt| == delta occurs
            if r.random_bool(0.5) {
                for x in &mut s {
                    x.time = (x.time * 4.0).floor() / 4.0;
                    x.frame = (x.time * (t - 1) as f64).round() as usize;
                }
            }
            samples.push(s);
            labels.push((0..t).map(|_| r.random_range(0..3)).collect::<Vec<usize>>());
            acts.push(with_acts.then(|| r.random_range(0..2)));
        }
        let refs: Vec<&[usize]> = labels.iter().map(Vec::as_slice).collect();
        let got = build_sets(&samples, &refs, &acts, &cfg);
        let (pos, neg) = enumerate_sets(&samples, &labels, &acts, cfg.delta);
        let m = got.len();
        neither += (0..m).map(|i| m - 1 - pos[i].len() - neg[i].len()).sum::<usize>();
        let sorted = |v: &Vec<Vec<usize>>| v.iter().map(|x| { let mut x = x.clone(); x.sort(); x }).collect::<Vec<_>>();
        if sorted(&got.positives) != pos || sorted(&got.negatives) != neg {
            bad += 1;
        }
        batches += 1;
    }
    (bad == 0 && neither > 0, format!("{batches} batches, {bad} mismatched, {neither} neither-set pairs seen"))
}

// --------------------------------------------------------- synthetic runs

struct World {
    dataset: Dataset,
    split: DatasetSplit,
    contrast: ContrastConfig,
    downsample: DownsampleConfig,
    train: TrainConfig,
    backbone: BackboneConfig,
}

impl World {
    fn new() -> Self {
        let dataset = synth_generate(&SynthSpec::default()).unwrap().into_dataset().unwrap();
        let split = make_split(&dataset.train_ids(), 0.1, 0, 1).unwrap();
        let train = TrainConfig {
            // small-scale training tolerates a larger backbone step than the
            // full-scale default; it still sits 10x below the heads
            classify_backbone_lr: 1e-3,
            ..TrainConfig::default()
        };
        let backbone = BackboneConfig::desk(dataset.input_dim());
        Self {
            dataset,
            split,
            contrast: ContrastConfig::default(),
            downsample: DownsampleConfig::default(),
            train,
            backbone,
        }
    }

    fn setup(&self) -> Setup<'_> {
        Setup {
            dataset: &self.dataset,
            split: &self.split,
            contrast: &self.contrast,
            downsample: &self.downsample,
            train: &self.train,
        }
    }

    fn train_labels(&self) -> Vec<LabelSequence> {
        self.dataset.train_ids().iter().map(|id| self.dataset.video(id).unwrap().1.clone()).collect()
    }
}

struct ProbeRun {
    raw: MetricReport,
    before: MetricReport,
    after: MetricReport,
}

fn probe_run(w: &World) -> ProbeRun {
    let backbone = Backbone::new(w.backbone.clone(), w.train.seed, DType::F32).unwrap();
    pretrain_unsupervised(&w.setup(), &backbone).unwrap();
    let labels = w.train_labels();
    let probe = |representation| {
        let cfg = LinearEvalConfig {
            representation,
            ..LinearEvalConfig::default()
        };
        let b = (representation != Representation::Raw).then_some(&backbone);
        linear_evaluation(b, &w.dataset, &labels, &cfg).unwrap().report
    };
    ProbeRun {
        raw: probe(Representation::Raw),
        before: probe(Representation::MultiRes {
            mode: UpsampleMode::Nearest,
            order: NormOrder::BeforeConcat,
        }),
        after: probe(Representation::MultiRes {
            mode: UpsampleMode::Nearest,
            order: NormOrder::AfterConcat,
        }),
    }
}

struct TrainingRuns {
    full: IccHistory,
    full_report: MetricReport,
    skip: IccHistory,
    skip_report: MetricReport,
    baseline: MetricReport,
}

fn training_runs(w: &World) -> TrainingRuns {
    let s = w.setup();
    let full = run_icc(&s, &w.backbone, &IccOptions::default()).unwrap();
    let skip = run_icc(
        &s,
        &w.backbone,
        &IccOptions {
            skip_pretrain: true,
            ..IccOptions::default()
        },
    )
    .unwrap();
    let baseline = supervised_baseline(&s, &w.backbone).unwrap().report;
    TrainingRuns {
        full_report: full.history.last().unwrap().report.clone(),
        full: full.history,
        skip_report: skip.history.last().unwrap().report.clone(),
        skip: skip.history,
        baseline,
    }
}

/// Every CSV an acceptance run produces, keyed by file name.
fn write_outputs(dir: &Path, probe: &ProbeRun, runs: &TrainingRuns) -> Vec<(String, Vec<u8>)> {
    let reports = [
        ("probe_raw", &probe.raw),
        ("probe_before", &probe.before),
        ("probe_after", &probe.after),
        ("icc", &runs.full_report),
        ("skip", &runs.skip_report),
        ("baseline", &runs.baseline),
    ];
    let mut names = Vec::new();
    for (name, report) in reports {
        report.write_csv(&dir.join(format!("{name}_report.csv"))).unwrap();
        report.write_per_video_csv(&dir.join(format!("{name}_per_video.csv"))).unwrap();
        names.push(format!("{name}_report.csv"));
        names.push(format!("{name}_per_video.csv"));
    }
    runs.full.write_csv(&dir.join("icc_history.csv")).unwrap();
    runs.skip.write_csv(&dir.join("skip_history.csv")).unwrap();
    names.push("icc_history.csv".into());
    names.push("skip_history.csv".into());
    names
        .into_iter()
        .map(|n| {
            let text = std::fs::read_to_string(dir.join(&n)).unwrap();
            (n, strip_wall_clock(&text).into_bytes())
        })
        .collect()
}

/// Drops the `wall_seconds` column, the one field that measures the machine.
fn strip_wall_clock(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(header) = lines.next() else { return String::new() };
    let Some(col) = header.split(',').position(|c| c == "wall_seconds") else {
        return csv.to_string();
    };
    std::iter::once(header)
        .chain(lines)
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != col).map(|(_, v)| v).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() {
    let mut outcomes = vec![
        criterion("multi-resolution cosine decomposition", decomposition),
        criterion("nearest-upsampling continuity bound", continuity),
        criterion("contrastive loss gradients", gradients),
        criterion("metric oracles", metric_oracles),
        criterion("positive/negative set construction", set_construction),
    ];

    let world = World::new();
    let t = Instant::now();
    let probe = probe_run(&world);
    println!("  pretrain + probes: {:.1}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let runs = training_runs(&world);
    println!("  icc + skip-pretrain + baseline: {:.1}s", t.elapsed().as_secs_f64());

    outcomes.push(criterion("representation gain over raw features", || {
        let gain = probe.before.mof - probe.raw.mof;
        (gain >= 15.0, format!("probe MoF pretrained {:.2} vs raw {:.2} (gain {gain:.2}, need >= 15)", probe.before.mof, probe.raw.mof))
    }));
    outcomes.push(criterion("normalization order", || {
        (
            probe.before.mof >= probe.after.mof,
            format!("probe MoF normalize-then-concat {:.2} vs concat-then-normalize {:.2}", probe.before.mof, probe.after.mof),
        )
    }));
    outcomes.push(criterion("iterative contrast-classify progression", || {
        let first = &runs.full.records[0].report;
        let last = &runs.full_report;
        let mof_up = last.mof >= first.mof;
        let f1_up = last.f1_10 >= first.f1_10;
        let margin = last.mof - runs.baseline.mof;
        let per_iter: Vec<String> = runs
            .full
            .records
            .iter()
            .map(|r| format!("{}: {:.2}/{:.2}/{:.2}", r.iteration, r.report.mof, r.report.f1_10, r.report.edit))
            .collect();
        (
            mof_up && f1_up && margin >= 5.0,
            format!(
                "MoF/F1@10/Edit per iteration [{}]; supervised baseline {:.2}/{:.2}; margin {margin:.2} (need >= 5)",
                per_iter.join(", "),
                runs.baseline.mof,
                runs.baseline.f1_10
            ),
        )
    }));
    outcomes.push(criterion("pretraining ablation", || {
        let (skip, full) = (runs.skip_report.f1_10, runs.full_report.f1_10);
        (skip <= full, format!("F1@10 without pretraining {skip:.2} vs full {full:.2}; MoF {:.2} vs {:.2}", runs.skip_report.mof, runs.full_report.mof))
    }));

    let t = Instant::now();
    let probe2 = probe_run(&world);
    let runs2 = training_runs(&world);
    println!("  repeat: {:.1}s", t.elapsed().as_secs_f64());
    outcomes.push(criterion("determinism", || {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = write_outputs(a.path(), &probe, &runs);
        let second = write_outputs(b.path(), &probe2, &runs2);
        let differ: Vec<&str> = first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
        (differ.is_empty(), format!("{} CSV files compared, differing: {differ:?}", first.len()))
    }));

    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
