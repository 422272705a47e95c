//! Synthetic locally low-rank matrices.
//!
//! Rows and columns get latent directions drawn around orthogonal cluster
//! centers. Every (row cluster, col cluster) pair owns one rank-r ground
//! truth model anchored at the pair of centers, and each cell blends the
//! models with Nadaraya-Watson weights from the product Epanechnikov kernel
//! over arccos distances to the anchors. With tight clusters each cell sees
//! one model, so the matrix is low rank inside each block but not globally.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ObservedMatrix, RatingScale};
use crate::ensemble::nw_average;
use crate::error::Result;
use crate::kernel::{arccos_distance, epanechnikov};

#[derive(Debug, Clone, PartialEq)]
pub struct BlendSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_clusters: usize,
    pub col_clusters: usize,
    /// Rank of each ground-truth model.
    pub rank: usize,
    /// Per-coordinate jitter of latent directions around their center.
    pub spread: f64,
    /// Spread of each model's factors around its mean. Model `(a, b)` has
    /// mean level `±1` following a Sylvester-Hadamard sign pattern, so rows
    /// (and columns) of different clusters are close to orthogonal while
    /// rows of one cluster stay close; that is the geometry the arccos
    /// distance picks up.
    pub factor_jitter: f64,
    /// Bandwidth of the blending kernel.
    pub bandwidth: f64,
    pub observed_fraction: f64,
    /// Standard deviation of Gaussian noise added to observed values.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlendSpec {
    fn default() -> Self {
        BlendSpec {
            n_rows: 200,
            n_cols: 200,
            row_clusters: 2,
            col_clusters: 2,
            rank: 2,
            spread: 0.15,
            factor_jitter: 0.2,
            bandwidth: 0.8,
            observed_fraction: 0.2,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub truth: DMatrix<f64>,
    /// The observed cells (with noise, if any).
    pub observed: ObservedMatrix,
    /// Every unobserved cell with its noiseless value.
    pub held_out: ObservedMatrix,
    pub row_cluster: Vec<usize>,
    pub col_cluster: Vec<usize>,
}

/// Wide symmetric scale so synthetic values are never out of range.
pub fn synthetic_scale() -> RatingScale {
    RatingScale {
        min: -1e6,
        max: 1e6,
        default: 0.0,
    }
}

fn latent(
    n: usize,
    clusters: usize,
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let labels: Vec<usize> = (0..n).map(|i| i * clusters / n).collect();
    let vecs = labels
        .iter()
        .map(|&c| {
            (0..clusters)
                .map(|k| {
                    let base = if k == c { 1.0 } else { 0.0 };
                    let z: f64 = StandardNormal.sample(rng);
                    base + spread * z
                })
                .collect()
        })
        .collect();
    (labels, vecs)
}

fn center(clusters: usize, c: usize) -> Vec<f64> {
    (0..clusters)
        .map(|k| if k == c { 1.0 } else { 0.0 })
        .collect()
}

/// `n x rank` factor whose rows scatter around `mean`.
fn clustered_factor(n: usize, mean: &[f64], jitter: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, mean.len(), |_, k| {
        let z: f64 = StandardNormal.sample(rng);
        mean[k] + jitter * z
    })
}

fn hadamard_sign(a: usize, b: usize) -> f64 {
    if (a & b).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn locally_low_rank(spec: &BlendSpec) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (row_cluster, row_latent) = latent(spec.n_rows, spec.row_clusters, spec.spread, &mut rng);
    let (col_cluster, col_latent) = latent(spec.n_cols, spec.col_clusters, spec.spread, &mut rng);

    let mut models = Vec::new();
    for a in 0..spec.row_clusters {
        for b in 0..spec.col_clusters {
            let mut mu = vec![0.0; spec.rank];
            let mut nu = vec![0.0; spec.rank];
            mu[0] = 1.0;
            nu[0] = hadamard_sign(a, b);
            let u = clustered_factor(spec.n_rows, &mu, spec.factor_jitter, &mut rng);
            let v = clustered_factor(spec.n_cols, &nu, spec.factor_jitter, &mut rng);
            models.push((a, b, &u * v.transpose()));
        }
    }

    let row_k: Vec<Vec<f64>> = row_latent
        .iter()
        .map(|x| {
            (0..spec.row_clusters)
                .map(|a| {
                    let d = arccos_distance(x, &center(spec.row_clusters, a)).unwrap_or(f64::MAX);
                    epanechnikov(d, spec.bandwidth)
                })
                .collect()
        })
        .collect();
    let col_k: Vec<Vec<f64>> = col_latent
        .iter()
        .map(|y| {
            (0..spec.col_clusters)
                .map(|b| {
                    let d = arccos_distance(y, &center(spec.col_clusters, b)).unwrap_or(f64::MAX);
                    epanechnikov(d, spec.bandwidth)
                })
                .collect()
        })
        .collect();

    let truth = DMatrix::from_fn(spec.n_rows, spec.n_cols, |i, j| {
        let kernel: Vec<f64> = models
            .iter()
            .map(|(a, b, _)| row_k[i][*a] * col_k[j][*b])
            .collect();
        let values: Vec<f64> = models.iter().map(|(_, _, t)| t[(i, j)]).collect();
        // Cells outside every anchor's support take their own block's model.
        nw_average(&kernel, &values).unwrap_or_else(|| {
            models
                .iter()
                .find(|(a, b, _)| *a == row_cluster[i] && *b == col_cluster[j])
                .map(|(_, _, t)| t[(i, j)])
                .unwrap_or(0.0)
        })
    });

    let mask = DMatrix::from_fn(spec.n_rows, spec.n_cols, |_, _| {
        rng.random::<f64>() < spec.observed_fraction
    });
    let noisy = DMatrix::from_fn(spec.n_rows, spec.n_cols, |i, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        truth[(i, j)] + spec.noise * z
    });
    let scale = synthetic_scale();
    let observed = ObservedMatrix::from_dense_masked(&noisy, |i, j| mask[(i, j)], scale)?;
    let held_out = ObservedMatrix::from_dense_masked(&truth, |i, j| !mask[(i, j)], scale)?;
    Ok(SyntheticData {
        truth,
        observed,
        held_out,
        row_cluster,
        col_cluster,
    })
}

/// Gaussian rank-`rank` matrix `U V^T` with each cell observed
/// independently with probability `observed_fraction`.
pub fn random_low_rank(
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    observed_fraction: f64,
    seed: u64,
) -> Result<(DMatrix<f64>, ObservedMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: DMatrix<f64> = DMatrix::from_fn(n_rows, rank, |_, _| StandardNormal.sample(&mut rng));
    let v: DMatrix<f64> = DMatrix::from_fn(n_cols, rank, |_, _| StandardNormal.sample(&mut rng));
    let m = &u * v.transpose();
    let mask = DMatrix::from_fn(n_rows, n_cols, |_, _| {
        rng.random::<f64>() < observed_fraction
    });
    let observed = ObservedMatrix::from_dense_masked(&m, |i, j| mask[(i, j)], synthetic_scale())?;
    Ok((m, observed))
}
