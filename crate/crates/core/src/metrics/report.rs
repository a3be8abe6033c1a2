use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{edit_score, mof, segment_matches, MatchCounts};
use crate::error::Result;

pub const F1_THRESHOLDS: [f64; 3] = [10.0, 25.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Pool counts over all frames (MoF) or all segments (F1) of the dataset.
    FramePooled,
    /// Average the per-video scores.
    VideoMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub video_id: String,
    pub frames: usize,
    pub correct: usize,
    pub mof: f64,
    pub edit: f64,
    pub f1: [f64; 3],
    pub matches: [MatchCounts; 3],
}

impl VideoMetrics {
    pub fn compute(video_id: &str, pred: &[usize], gt: &[usize]) -> Result<Self> {
        let m = mof(pred, gt)?;
        let edit = edit_score(pred, gt)?;
        let mut matches = [MatchCounts::default(); 3];
        let mut f1 = [0.0; 3];
        for (i, thr) in F1_THRESHOLDS.iter().enumerate() {
            matches[i] = segment_matches(pred, gt, *thr)?;
            f1[i] = matches[i].scores().2;
        }
        Ok(Self {
            video_id: video_id.to_string(),
            frames: gt.len(),
            correct: pred.iter().zip(gt).filter(|(p, g)| p == g).count(),
            mof: m,
            edit,
            f1,
            matches,
        })
    }
}

/// Dataset-level scores, all in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mof: f64,
    pub edit: f64,
    pub f1_10: f64,
    pub f1_25: f64,
    pub f1_50: f64,
    pub mof_aggregation: Aggregation,
    pub segmental_aggregation: Aggregation,
    pub per_video: Vec<VideoMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricReport {
    /// Frame-pooled MoF and video-mean Edit/F1.
    pub fn from_videos(per_video: Vec<VideoMetrics>) -> Self {
        Self::with_aggregation(per_video, Aggregation::FramePooled, Aggregation::VideoMean)
    }

    pub fn with_aggregation(per_video: Vec<VideoMetrics>, mof_agg: Aggregation, seg_agg: Aggregation) -> Self {
        let mof = match mof_agg {
            Aggregation::FramePooled => {
                let frames: usize = per_video.iter().map(|v| v.frames).sum();
                let correct: usize = per_video.iter().map(|v| v.correct).sum();
                if frames == 0 {
                    0.0
                } else {
                    100.0 * correct as f64 / frames as f64
                }
            }
            Aggregation::VideoMean => mean(per_video.iter().map(|v| v.mof)),
        };
        let edit = mean(per_video.iter().map(|v| v.edit));
        let f1 = |i: usize| match seg_agg {
            Aggregation::FramePooled => per_video
                .iter()
                .map(|v| v.matches[i])
                .fold(MatchCounts::default(), |a, b| a + b)
                .scores()
                .2,
            Aggregation::VideoMean => mean(per_video.iter().map(|v| v.f1[i])),
        };
        Self {
            mof,
            edit,
            f1_10: f1(0),
            f1_25: f1(1),
            f1_50: f1(2),
            mof_aggregation: mof_agg,
            segmental_aggregation: seg_agg,
            per_video,
        }
    }

    /// `(pred, gt)` pairs keyed by video id.
    pub fn evaluate<'a>(videos: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [usize])>) -> Result<Self> {
        let per_video = videos
            .into_iter()
            .map(|(id, p, g)| VideoMetrics::compute(id, p, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_videos(per_video))
    }

    pub fn values(&self) -> [f64; 5] {
        [self.mof, self.edit, self.f1_10, self.f1_25, self.f1_50]
    }

    pub const COLUMNS: [&'static str; 5] = ["mof", "edit", "f1_10", "f1_25", "f1_50"];

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::COLUMNS)?;
        w.write_record(self.values().iter().map(|v| format!("{v:.4}")))?;
        crate::data::io::write_atomic(path, &w.into_inner().map_err(|e| e.into_error())
            .map_err(|e| crate::error::Error::io(path, e))?)
    }

    pub fn write_per_video_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["video_id", "frames", "mof", "edit", "f1_10", "f1_25", "f1_50"])?;
        for v in &self.per_video {
            w.write_record([
                v.video_id.clone(),
                v.frames.to_string(),
                format!("{:.4}", v.mof),
                format!("{:.4}", v.edit),
                format!("{:.4}", v.f1[0]),
                format!("{:.4}", v.f1[1]),
                format!("{:.4}", v.f1[2]),
            ])?;
        }
        crate::data::io::write_atomic(path, &w.into_inner().map_err(|e| e.into_error())
            .map_err(|e| crate::error::Error::io(path, e))?)
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>8} {:>8} {:>8}", "MoF", "Edit", "F1@10", "F1@25", "F1@50")?;
        write!(
            f,
            "{:>8.1} {:>8.1} {:>8.1} {:>8.1} {:>8.1}",
            self.mof, self.edit, self.f1_10, self.f1_25, self.f1_50
        )
    }
}

/// Mean and sample standard deviation of each metric over several runs
/// (e.g. different labeled-video selections).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub runs: usize,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

pub fn summarize(reports: &[MetricReport]) -> DeviationSummary {
    let n = reports.len();
    let mut mean_v = [0.0; 5];
    let mut std_v = [0.0; 5];
    for k in 0..5 {
        let xs: Vec<f64> = reports.iter().map(|r| r.values()[k]).collect();
        mean_v[k] = mean(xs.iter().copied());
        if n > 1 {
            let var = xs.iter().map(|x| (x - mean_v[k]).powi(2)).sum::<f64>() / (n - 1) as f64;
            std_v[k] = var.sqrt();
        }
    }
    DeviationSummary {
        runs: n,
        mean: mean_v,
        std: std_v,
    }
}

impl fmt::Display for DeviationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in MetricReport::COLUMNS.iter().enumerate() {
            if i > 0 {
                write!(f, "  ")?;
            }
            write!(f, "{name} {:.1} ± {:.1}", self.mean[i], self.std[i])?;
        }
        Ok(())
    }
}
