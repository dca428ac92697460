//! Input-transformation defenses: simple random sampling (SRS) and
//! statistical outlier removal (SOR). Both return an order-preserving
//! subset of the input points.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pointcloud::PointCloud;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("keep = {keep} exceeds cloud size {n}")]
    KeepTooLarge { keep: usize, n: usize },
    #[error("keep must be >= 1")]
    KeepZero,
    #[error("k = {k} must satisfy 1 <= k < n = {n}")]
    BadK { k: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, DefenseError>;

#[derive(Debug, Clone, Copy)]
pub struct DefenseConfig {
    pub srs_keep: usize,
    pub sor_k: usize,
    pub sor_alpha: f64,
}

impl DefenseConfig {
    /// Conventional defaults: drop half the points for SRS; k = 2,
    /// alpha = 1.1 for SOR.
    pub fn defaults_for(n: usize) -> Self {
        DefenseConfig { srs_keep: n.div_ceil(2), sor_k: 2, sor_alpha: 1.1 }
    }
}

fn subset(cloud: &PointCloud, keep: &[usize]) -> PointCloud {
    let mut pts = Array2::zeros((keep.len(), 3));
    for (dst, &src) in keep.iter().enumerate() {
        pts.row_mut(dst).assign(&cloud.points.row(src));
    }
    PointCloud { points: pts, label: cloud.label, name: cloud.name.clone() }
}

/// Keep a uniformly random subset of `keep` points without replacement,
/// preserving input order. Deterministic given the seed.
pub fn srs(cloud: &PointCloud, keep: usize, seed: u64) -> Result<PointCloud> {
    let n = cloud.len();
    if keep == 0 {
        return Err(DefenseError::KeepZero);
    }
    if keep > n {
        return Err(DefenseError::KeepTooLarge { keep, n });
    }
    // Partial Fisher-Yates draws an unordered sample; sorting restores
    // input order.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..keep {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    let mut kept = indices[..keep].to_vec();
    kept.sort_unstable();
    Ok(subset(cloud, &kept))
}

/// Per-point statistic for SOR: mean distance to the k nearest neighbors.
fn knn_mean_distances(cloud: &PointCloud, k: usize) -> Vec<f64> {
    let n = cloud.len();
    let pts = &cloud.points;
    (0..n)
        .map(|i| {
            let mut d2: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = &pts.row(j) - &pts.row(i);
                    d.dot(&d)
                })
                .collect();
            d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d2[..k].iter().map(|v| v.sqrt()).sum::<f64>() / k as f64
        })
        .collect()
}

/// Remove points whose mean kNN distance strictly exceeds mu + alpha * sigma,
/// where mu and sigma are the mean and population standard deviation of the
/// statistic over the cloud.
pub fn sor(cloud: &PointCloud, k: usize, alpha: f64) -> Result<PointCloud> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(DefenseError::BadK { k, n });
    }
    let stats = knn_mean_distances(cloud, k);
    let mu = stats.iter().sum::<f64>() / n as f64;
    let var = stats.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / n as f64;
    let threshold = mu + alpha * var.sqrt();
    let kept: Vec<usize> = (0..n).filter(|&i| stats[i] <= threshold).collect();
    Ok(subset(cloud, &kept))
}
