//! Ground-truth-free separation confidence.
//!
//! The score is the product of two embedding-space statistics over the
//! loudest 1% of mixture bins: the mean silhouette of a seeded subsample
//! (hard nearest-corner labels) and the mean posterior strength of the
//! soft assignment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{hard_label, ClusterAssignment, EmbeddingTensor};
use crate::error::{Error, Result};
use crate::tfr::{loudest_bins, MagnitudeSpectrogram};

/// Fraction of bins, by loudness, that confidence is computed over.
pub const LOUD_FRACTION: f64 = 0.01;
/// Default silhouette subsample size.
pub const DEFAULT_SAMPLES: usize = 1000;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-point silhouette scores. Points alone in their cluster score 0.
///
/// Fails with [`Error::SingleCluster`] when every label is the same.
pub fn silhouette<P: AsRef<[f64]> + Sync>(points: &[P], labels: &[usize]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::Empty("no points"));
    }
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch(points.len(), labels.len()));
    }
    let k = labels.iter().max().unwrap() + 1;
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    use rayon::prelude::*;
    Ok((0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            // sums accumulate in index order so results are reproducible
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += euclidean(points[i].as_ref(), p.as_ref());
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect())
}

/// Result of [`sample_silhouette`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteSample {
    pub mean: f64,
    pub n_sampled: usize,
    /// All sampled points fell into one cluster; `mean` is 0.
    pub degenerate: bool,
}

/// Draws up to `n` of the loudest-1% bins without replacement and returns
/// the mean silhouette under nearest-corner labels. When the loud set has
/// at most `n` bins all of them are used.
pub fn sample_silhouette(
    emb: &EmbeddingTensor,
    mag: &MagnitudeSpectrogram,
    n: usize,
    seed: u64,
) -> Result<SilhouetteSample> {
    if n < 2 {
        return Err(Error::invalid("silhouette sample size must be >= 2"));
    }
    check_geometry(emb, mag)?;
    let loud = loudest_bins(mag, LOUD_FRACTION)?;
    let chosen: Vec<(usize, usize)> = if loud.len() <= n {
        loud
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, loud.len(), n)
            .into_iter()
            .map(|i| loud[i])
            .collect()
    };
    let points: Vec<Vec<f64>> = chosen.iter().map(|&(t, f)| emb.point(t, f)).collect();
    let labels: Vec<usize> = points.iter().map(|p| hard_label(p) as usize).collect();
    match silhouette(&points, &labels) {
        Ok(scores) => Ok(SilhouetteSample {
            mean: scores.iter().sum::<f64>() / scores.len() as f64,
            n_sampled: points.len(),
            degenerate: false,
        }),
        Err(Error::SingleCluster) => Ok(SilhouetteSample {
            mean: 0.0,
            n_sampled: points.len(),
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// `(K * max_k gamma_k - 1) / (K - 1)`: 0 for a uniform posterior, 1 for a
/// one-hot posterior.
pub fn posterior_strength(gamma: &[f64]) -> Result<f64> {
    let k = gamma.len();
    if k < 2 {
        return Err(Error::invalid("posterior strength needs K >= 2"));
    }
    if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::invalid("posterior entries must lie in [0, 1]"));
    }
    let sum: f64 = gamma.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NotNormalized(sum));
    }
    let max = gamma.iter().copied().fold(0.0, f64::max);
    Ok(((k as f64 * max - 1.0) / (k as f64 - 1.0)).clamp(0.0, 1.0))
}

/// Confidence summary for one separation, serialized as the CLI's
/// `confidence.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    #[serde(rename = "silhouette")]
    pub silhouette_mean: f64,
    #[serde(rename = "posterior_strength")]
    pub posterior_strength_mean: f64,
    pub confidence: f64,
    #[serde(rename = "n")]
    pub n_sampled: usize,
    pub seed: u64,
    #[serde(default)]
    pub degenerate: bool,
}

/// Combines the two statistics. The silhouette mean is floored at 0 before
/// the product so a negative silhouette cannot flip the sign.
pub fn combine(silhouette_mean: f64, posterior_strength_mean: f64) -> f64 {
    silhouette_mean.max(0.0) * posterior_strength_mean
}

pub fn confidence_report(
    emb: &EmbeddingTensor,
    assignment: &ClusterAssignment,
    mag: &MagnitudeSpectrogram,
    n: usize,
    seed: u64,
) -> Result<ConfidenceReport> {
    check_geometry(emb, mag)?;
    let (t, f, _) = assignment.gamma.dim();
    if (t, f) != mag.shape() {
        return Err(Error::ShapeMismatch {
            expected: mag.shape(),
            actual: (t, f),
        });
    }
    let sil = sample_silhouette(emb, mag, n, seed)?;
    let loud = loudest_bins(mag, LOUD_FRACTION)?;
    let mut total = 0.0;
    for &(t, f) in &loud {
        total += posterior_strength(&assignment.posterior(t, f))?;
    }
    let ps = total / loud.len() as f64;
    Ok(ConfidenceReport {
        silhouette_mean: sil.mean,
        posterior_strength_mean: ps,
        confidence: combine(sil.mean, ps),
        n_sampled: sil.n_sampled,
        seed,
        degenerate: sil.degenerate,
    })
}

fn check_geometry(emb: &EmbeddingTensor, mag: &MagnitudeSpectrogram) -> Result<()> {
    if emb.shape() != mag.shape() {
        return Err(Error::ShapeMismatch {
            expected: mag.shape(),
            actual: emb.shape(),
        });
    }
    Ok(())
}
