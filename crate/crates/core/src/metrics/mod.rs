//! Frame-wise and segmental segmentation metrics.

mod linear_eval;
mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use linear_eval::{linear_evaluation, represent, LinearEval, LinearEvalConfig, Representation};
pub use report::{summarize, Aggregation, DeviationSummary, MetricReport, VideoMetrics, F1_THRESHOLDS};

/// A maximal run of one label, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    fn overlap(&self, other: &Segment) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

pub fn segments(labels: &[usize]) -> Result<Vec<Segment>> {
    let (&first, _) = labels.split_first().ok_or(Error::EmptySequence)?;
    let mut out = Vec::new();
    let mut current = Segment {
        label: first,
        start: 0,
        end: 1,
    };
    for (t, &l) in labels.iter().enumerate().skip(1) {
        if l == current.label {
            current.end = t + 1;
        } else {
            out.push(current);
            current = Segment {
                label: l,
                start: t,
                end: t + 1,
            };
        }
    }
    out.push(current);
    Ok(out)
}

fn check_lengths(pred: &[usize], gt: &[usize]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            what: "prediction".into(),
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(())
}

/// Percentage of frames whose label matches.
pub fn mof(pred: &[usize], gt: &[usize]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let correct = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(100.0 * correct as f64 / gt.len() as f64)
}

fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized Levenshtein similarity of the segment label strings, in `[0, 100]`.
pub fn edit_score(pred: &[usize], gt: &[usize]) -> Result<f64> {
    let p: Vec<usize> = segments(pred)?.iter().map(|s| s.label).collect();
    let g: Vec<usize> = segments(gt)?.iter().map(|s| s.label).collect();
    let d = levenshtein(&p, &g) as f64;
    Ok((100.0 * (1.0 - d / p.len().max(g.len()) as f64)).max(0.0))
}

/// Segment match counts at one IoU threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    /// Precision, recall and F1 in percent; F1 is 0 when both are 0.
    pub fn scores(&self) -> (f64, f64, f64) {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f1)
    }
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Greedy one-to-one matching of predicted to ground-truth segments.
///
/// Predictions are visited in temporal order; each takes the unmatched
/// same-label ground-truth segment of highest IoU (earliest on ties) if that
/// IoU reaches `iou_threshold` percent.
pub fn segment_matches(pred: &[usize], gt: &[usize], iou_threshold: f64) -> Result<MatchCounts> {
    if !(iou_threshold > 0.0 && iou_threshold <= 100.0) {
        return Err(Error::BadSpec(format!("IoU threshold {iou_threshold} not in (0, 100]")));
    }
    let ps = segments(pred)?;
    let gs = segments(gt)?;
    let mut used = vec![false; gs.len()];
    let mut counts = MatchCounts::default();
    for p in &ps {
        let mut best: Option<(usize, usize, usize)> = None; // (index, inter, union)
        for (j, g) in gs.iter().enumerate() {
            if used[j] || g.label != p.label {
                continue;
            }
            let inter = p.overlap(g);
            let union = p.len() + g.len() - inter;
            // inter / union >= threshold / 100, compared without division
            if (inter as f64) * 100.0 < iou_threshold * union as f64 {
                continue;
            }
            let better = match best {
                None => true,
                // inter/union > bi/bu
                Some((_, bi, bu)) => inter * bu > bi * union,
            };
            if better {
                best = Some((j, inter, union));
            }
        }
        match best {
            Some((j, _, _)) => {
                used[j] = true;
                counts.tp += 1;
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = used.iter().filter(|u| !**u).count();
    Ok(counts)
}

/// Segmental precision, recall and F1 (percent) at an IoU threshold in percent.
pub fn f1_at(pred: &[usize], gt: &[usize], iou_threshold: f64) -> Result<(f64, f64, f64)> {
    Ok(segment_matches(pred, gt, iou_threshold)?.scores())
}
