use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::data::{FeatureSequence, LabelSequence, LabelSource};
use crate::error::{Error, Result};

const MAX_ITERS: usize = 100;
const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f32>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(&x, &c)| (x as f64 - c).powi(2)).sum()
}

fn assign(points: ArrayView2<f32>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, row) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, row);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn plus_plus_seed<R: Rng + ?Sized>(points: ArrayView2<f32>, k: usize, rng: &mut R) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut centroids = Array2::<f64>::zeros((k, d));
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.row_mut(0).assign(&points.row(first).mapv(f64::from));
    let mut dist: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // guard against round-off landing on a zero-weight tail
            if dist[pick] == 0.0 {
                pick = dist.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.row_mut(c).assign(&points.row(pick).mapv(f64::from));
        for (i, p) in points.rows().into_iter().enumerate() {
            dist[i] = dist[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding. Stops after 100 iterations or
/// when the inertia changes by less than `1e-4` relative. A cluster that
/// loses all its points is moved to the point farthest from its centroid.
pub fn kmeans<R: Rng + ?Sized>(points: ArrayView2<f32>, k: usize, rng: &mut R) -> Result<KMeans> {
    let (n, d) = points.dim();
    if k == 0 || n < k {
        return Err(Error::TooFewFrames { needed: k.max(1), available: n });
    }
    let mut centroids = plus_plus_seed(points, k, rng);
    let (mut assignments, mut dists) = assign(points, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (p, &c) in points.rows().into_iter().zip(&assignments) {
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row.zip_mut_with(&p, |s, &x| *s += x as f64);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k >= 1");
                centroids.row_mut(c).assign(&points.row(far).mapv(f64::from));
                dists[far] = 0.0;
            }
        }
        (assignments, dists) = assign(points, &centroids);
        let next: f64 = dists.iter().sum();
        let change = (inertia - next).abs() / inertia.max(f64::MIN_POSITIVE);
        inertia = next;
        if change < REL_TOL {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        inertia,
        iterations,
    })
}

/// Cluster the pooled frames of a mini-batch and split the assignments back
/// into one cluster-label sequence per video.
pub fn cluster_batch<R: Rng + ?Sized>(inputs: &[&FeatureSequence], k: usize, rng: &mut R) -> Result<Vec<LabelSequence>> {
    let total: usize = inputs.iter().map(|f| f.len()).sum();
    if total < k || inputs.is_empty() {
        return Err(Error::TooFewFrames { needed: k, available: total });
    }
    let views: Vec<_> = inputs.iter().map(|f| f.data.view()).collect();
    let pooled = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeError(e.to_string()))?;
    let km = kmeans(pooled.view(), k, rng)?;
    let mut out = Vec::with_capacity(inputs.len());
    let mut offset = 0;
    for f in inputs {
        let labels = km.assignments[offset..offset + f.len()].to_vec();
        offset += f.len();
        out.push(LabelSequence::new(f.video_id.clone(), labels, LabelSource::Cluster));
    }
    Ok(out)
}

/// Diagnostic dump with columns `video_id, frame, cluster`.
pub fn write_cluster_csv(path: &Path, labels: &[LabelSequence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["video_id", "frame", "cluster"])?;
    for l in labels {
        for (t, c) in l.labels.iter().enumerate() {
            w.write_record([l.video_id.as_str(), &t.to_string(), &c.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
