use candle_core::{DType, Tensor};

use super::ContrastSets;
use crate::error::{Error, Result};
use crate::network::NORM_FLOOR;

#[derive(Debug, Clone)]
pub struct FrameLoss {
    /// Scalar.
    pub loss: Tensor,
    /// Anchors dropped because they had positives but no negatives.
    pub skipped: usize,
    /// Number of (anchor, positive) pairs in the normalizer.
    pub num_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct VideoLoss {
    /// Scalar; zero when skipped.
    pub loss: Tensor,
    pub skipped: bool,
    pub num_pairs: usize,
}

/// Pairwise cosine similarity of the rows of `x` (`M x d`).
fn cosine_matrix(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(1)?.sqrt()? + NORM_FLOOR)?;
    let xn = x.broadcast_div(&norm)?;
    Ok(xn.matmul(&xn.t()?)?)
}

fn mask(rows: &[Vec<usize>], m: usize, dtype: DType, device: &candle_core::Device) -> Result<Tensor> {
    let mut data = vec![0f32; m * m];
    for (a, cols) in rows.iter().enumerate() {
        for &b in cols {
            data[a * m + b] = 1.0;
        }
    }
    Ok(Tensor::from_vec(data, (m, m), device)?.to_dtype(dtype)?)
}

/// Contrastive loss over sets whose rows are `x` (`M x d`), normalized by the
/// number of (anchor, positive) pairs:
/// `-(1/N) sum_a sum_{j in P(a)} log( e(a,j) / (e(a,j) + sum_{k in N(a)} e(a,k)) )`
/// with `e(a,b) = exp(cos(x_a, x_b) / tau)`.
fn infonce(x: &Tensor, positives: &[Vec<usize>], negatives: &[Vec<usize>], tau: f64) -> Result<Tensor> {
    let m = x.dim(0)?;
    let pairs: usize = positives.iter().map(Vec::len).sum();
    let dev = x.device();
    // shifting by -1/tau keeps every exponent in [-2/tau, 0]
    let s = cosine_matrix(x)?.affine(1.0 / tau, -1.0 / tau)?;
    let e = s.exp()?;
    let pos = mask(positives, m, x.dtype(), dev)?;
    let neg = mask(negatives, m, x.dtype(), dev)?;
    let negsum = (&e * &neg)?.sum_keepdim(1)?;
    let log_denom = e.broadcast_add(&negsum)?.log()?;
    let terms = ((log_denom - s)? * pos)?;
    Ok(terms.sum_all()?.affine(1.0 / pairs as f64, 0.0)?)
}

/// Frame-level loss. `features[n]` holds the per-frame representation of
/// video `n` (`T_n x d`); each anchor reads the row at its sample frame.
/// Anchors with no positives contribute nothing; anchors with positives but
/// no negatives are skipped and counted.
pub fn frame_contrast_loss(features: &[Tensor], sets: &ContrastSets, tau: f64) -> Result<FrameLoss> {
    let mut offsets = Vec::with_capacity(features.len());
    let mut total = 0;
    for f in features {
        offsets.push(total);
        total += f.dim(0)?;
    }
    let idx: Vec<u32> = sets.anchors.iter().map(|s| (offsets[s.video] + s.frame) as u32).collect();
    let all = Tensor::cat(features, 0)?;
    let x = all.index_select(&Tensor::from_vec(idx, sets.len(), all.device())?, 0)?;

    let mut skipped = 0;
    let positives: Vec<Vec<usize>> = sets
        .positives
        .iter()
        .zip(&sets.negatives)
        .map(|(p, n)| {
            if !p.is_empty() && n.is_empty() {
                skipped += 1;
                Vec::new()
            } else {
                p.clone()
            }
        })
        .collect();
    let num_pairs: usize = positives.iter().map(Vec::len).sum();
    if num_pairs == 0 {
        return Err(Error::NoValidAnchors { skipped });
    }
    Ok(FrameLoss {
        loss: infonce(&x, &positives, &sets.negatives, tau)?,
        skipped,
        num_pairs,
    })
}

/// Video-level loss on per-video summaries (`N x d`): positives are the other
/// videos of the same activity, negatives the videos of other activities.
/// Returns zero, flagged as skipped, when fewer than two activities are
/// present or no video has a positive.
pub fn video_contrast_loss(summaries: &Tensor, activities: &[usize], tau: f64) -> Result<VideoLoss> {
    let n = summaries.dim(0)?;
    if n != activities.len() {
        return Err(Error::LengthMismatch {
            what: "video activities".into(),
            expected: n,
            actual: activities.len(),
        });
    }
    let mut positives = vec![Vec::new(); n];
    let mut negatives = vec![Vec::new(); n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            if activities[a] == activities[b] {
                positives[a].push(b);
            } else {
                negatives[a].push(b);
            }
        }
    }
    let distinct = activities.iter().collect::<std::collections::BTreeSet<_>>().len();
    let num_pairs: usize = positives.iter().map(Vec::len).sum();
    if distinct < 2 || num_pairs == 0 {
        return Ok(VideoLoss {
            loss: Tensor::zeros((), summaries.dtype(), summaries.device())?,
            skipped: true,
            num_pairs: 0,
        });
    }
    Ok(VideoLoss {
        loss: infonce(summaries, &positives, &negatives, tau)?,
        skipped: false,
        num_pairs,
    })
}

/// Unweighted sum of the two terms.
pub fn total_contrast_loss(frame: &Tensor, video: &Tensor) -> Result<Tensor> {
    Ok((frame + video)?)
}
