//! Anchor sampling and kernel-weighted low-rank fits around each anchor.
//!
//! Each local model minimizes
//!
//! ```text
//! sum_{(i,j) observed} w_ij ([U V^T]_ij - M_ij)^2 + lambda (|U|_F^2 + |V|_F^2)
//! ```
//!
//! with `w_ij = K'(a, i) K''(b, j)` for anchor `(a, b)`. Entries outside the
//! kernel support are dropped before fitting. Models for different anchors
//! share nothing mutable and are trained on the rayon pool.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::ObservedMatrix;
use crate::error::{LrmaError, Result};
use crate::factor::{check_factor_shapes, weighted_terms, FactorPair, TrainConfig};
use crate::kernel::{anchor_weight_vectors, DistanceModel, KernelConfig};
use crate::solver::{self, FitReport, WeightedProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Anchor {
    pub row: usize,
    pub col: usize,
}

impl Anchor {
    pub fn new(row: usize, col: usize) -> Self {
        Anchor { row, col }
    }

    pub fn as_pair(self) -> (usize, usize) {
        (self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub anchor: Anchor,
    pub factors: FactorPair,
}

/// Every observed entry in a seeded random order. The first `q` items are
/// the anchors returned by [`sample_anchors`]; later items serve as
/// replacements.
pub fn anchor_candidates(train: &ObservedMatrix, seed: u64) -> Vec<Anchor> {
    let mut all: Vec<Anchor> = train
        .entries()
        .iter()
        .map(|e| Anchor::new(e.row, e.col))
        .collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all
}

/// `q` distinct observed entries drawn uniformly without replacement.
pub fn sample_anchors(train: &ObservedMatrix, q: usize, seed: u64) -> Result<Vec<Anchor>> {
    if q == 0 {
        return Err(LrmaError::invalid("anchor count must be at least 1"));
    }
    if q > train.len() {
        return Err(LrmaError::InsufficientEntries {
            requested: q,
            available: train.len(),
        });
    }
    let mut all = anchor_candidates(train, seed);
    all.truncate(q);
    Ok(all)
}

/// Kernel weight of every training entry with respect to `anchor`, in entry
/// order.
pub fn entry_weights(
    train: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
) -> Result<Vec<f64>> {
    let (rw, cw) = anchor_weights_for(train, anchor, dm, kcfg)?;
    Ok(train
        .entries()
        .iter()
        .map(|e| rw[e.row] * cw[e.col])
        .collect())
}

fn anchor_weights_for(
    train: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    kcfg.validate()?;
    if dm.n_rows() != train.n_rows() || dm.n_cols() != train.n_cols() {
        return Err(LrmaError::shape(
            format!("distance model {}x{}", train.n_rows(), train.n_cols()),
            format!("{}x{}", dm.n_rows(), dm.n_cols()),
        ));
    }
    anchor_weight_vectors(anchor.as_pair(), dm, kcfg)
}

fn local_problem(
    train: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
) -> Result<WeightedProblem> {
    let (rw, cw) = anchor_weights_for(train, anchor, dm, kcfg)?;
    let problem = WeightedProblem::build(train, |i, j| rw[i] * cw[j]);
    if problem.nnz() == 0 || problem.total_weight() <= 0.0 {
        return Err(LrmaError::EmptyNeighborhood {
            row: anchor.row,
            col: anchor.col,
        });
    }
    Ok(problem)
}

/// Fits the kernel-weighted model around one anchor.
pub fn train_local(
    train: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
    tcfg: &TrainConfig,
) -> Result<LocalModel> {
    train_local_report(train, anchor, dm, kcfg, tcfg).map(|(m, _)| m)
}

pub fn train_local_report(
    train: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
    tcfg: &TrainConfig,
) -> Result<(LocalModel, FitReport)> {
    let problem = local_problem(train, anchor, dm, kcfg)?;
    let report = solver::fit(&problem, tcfg)?;
    Ok((
        LocalModel {
            anchor,
            factors: report.factors.clone(),
        },
        report,
    ))
}

/// Seed for the `index`-th local model, derived from the master seed.
pub fn anchor_seed(master: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one model per anchor in parallel. Model `k` uses
/// `anchor_seed(tcfg.seed, k)`; results come back in anchor order, so the
/// output does not depend on scheduling.
pub fn train_local_models(
    train: &ObservedMatrix,
    anchors: &[Anchor],
    dm: &DistanceModel,
    kcfg: &KernelConfig,
    tcfg: &TrainConfig,
) -> Vec<Result<LocalModel>> {
    anchors
        .par_iter()
        .enumerate()
        .map(|(k, &anchor)| {
            let cfg = TrainConfig {
                seed: anchor_seed(tcfg.seed, k),
                ..tcfg.clone()
            };
            train_local(train, anchor, dm, kcfg, &cfg)
        })
        .collect()
}

/// Loss and exact gradients of the weighted regularized objective.
/// `weights[k]` applies to `train.entries()[k]`.
pub fn weighted_objective_and_gradient(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    train: &ObservedMatrix,
    weights: &[f64],
    lambda: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check_factor_shapes(u, v, train)?;
    if weights.len() != train.len() {
        return Err(LrmaError::shape(
            format!("{} weights", train.len()),
            format!("{} weights", weights.len()),
        ));
    }
    Ok(weighted_terms(u, v, train, |k| weights[k], lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Rating, RatingScale};
    use crate::factor::{objective_and_gradient, rmse, train_global};
    use crate::kernel::KernelKind;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn wide() -> RatingScale {
        RatingScale::new(-100.0, 100.0, 0.0).unwrap()
    }

    fn random_matrix(seed: u64, n: usize, m: usize) -> ObservedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = DMatrix::from_fn(n, m, |_, _| rng.random_range(1.0..5.0));
        ObservedMatrix::from_dense_masked(
            &d,
            |_, _| rng.random::<f64>() < 0.7,
            RatingScale::MOVIELENS,
        )
        .unwrap()
    }

    fn random_dm(seed: u64, n: usize, m: usize) -> DistanceModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DistanceModel::new(
            DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.0..1.0)),
            DMatrix::from_fn(m, 3, |_, _| rng.random_range(0.0..1.0)),
        )
        .unwrap()
    }

    #[test]
    fn sampling_examples() {
        let train = random_matrix(1, 6, 5);
        let all = sample_anchors(&train, train.len(), 3).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), train.len());
        assert!(all.iter().all(|a| train.contains(a.row, a.col)));

        let one = sample_anchors(&train, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert!(train.contains(one[0].row, one[0].col));

        assert_eq!(
            sample_anchors(&train, 4, 9).unwrap(),
            sample_anchors(&train, 4, 9).unwrap()
        );
        assert!(matches!(
            sample_anchors(&train, train.len() + 1, 0),
            Err(LrmaError::InsufficientEntries { .. })
        ));
        assert!(matches!(
            sample_anchors(&train, 0, 0),
            Err(LrmaError::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_kernel_reduces_to_global_fit() {
        let train = random_matrix(2, 8, 7);
        let dm = random_dm(3, 8, 7);
        let kcfg = KernelConfig::new(10.0, 10.0, KernelKind::Uniform).unwrap();
        let tcfg = TrainConfig {
            rank: 2,
            seed: 17,
            ..Default::default()
        };
        let anchor = Anchor::new(train.entries()[0].row, train.entries()[0].col);
        let local = train_local(&train, anchor, &dm, &kcfg, &tcfg).unwrap();
        let global = train_global(&train, &tcfg).unwrap();
        assert_eq!(local.factors, global);
    }

    #[test]
    fn single_supported_entry_is_reproduced() {
        // Row 0 and column 0 are orthogonal to everything else, so only the
        // anchor's own entry has weight.
        let d = dmatrix![4.0, 2.0, 3.0; 1.0, 5.0, 2.0; 3.0, 3.0, 1.0];
        let train = ObservedMatrix::from_dense(&d, RatingScale::MOVIELENS).unwrap();
        let feats = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 1.0];
        let dm = DistanceModel::new(feats.clone(), feats).unwrap();
        let kcfg = KernelConfig::default();
        let tcfg = TrainConfig {
            rank: 1,
            lambda: 0.0,
            ..Default::default()
        };
        let weights = entry_weights(&train, Anchor::new(0, 0), &dm, &kcfg).unwrap();
        assert_eq!(weights.iter().filter(|&&w| w > 0.0).count(), 1);
        let m = train_local(&train, Anchor::new(0, 0), &dm, &kcfg, &tcfg).unwrap();
        assert!((m.factors.raw(0, 0) - 4.0).abs() < 1e-3);
    }

    fn two_block() -> (ObservedMatrix, DistanceModel) {
        let a = [1.0, 2.0, 1.5, 0.5];
        let b = [2.0, 1.0, 3.0, 1.0];
        let c = [3.0, 1.0, 2.0, 2.5];
        let e = [1.0, 2.0, 0.5, 1.5];
        let d = DMatrix::from_fn(8, 8, |i, j| match (i < 4, j < 4) {
            (true, true) => a[i] * b[j],
            (false, false) => c[i - 4] * e[j - 4],
            _ => 0.0,
        });
        let train = ObservedMatrix::from_dense(&d, wide()).unwrap();
        let feats = DMatrix::from_fn(8, 2, |i, k| if (i < 4) == (k == 0) { 1.0 } else { 0.0 });
        (train, DistanceModel::new(feats.clone(), feats).unwrap())
    }

    #[test]
    fn local_fit_captures_its_block() {
        let (train, dm) = two_block();
        let kcfg = KernelConfig::default();
        let tcfg = TrainConfig {
            rank: 1,
            lambda: 0.0,
            tolerance: 1e-10,
            ..Default::default()
        };
        let local = train_local(&train, Anchor::new(1, 2), &dm, &kcfg, &tcfg).unwrap();
        let block1 = ObservedMatrix::new(
            8,
            8,
            train
                .entries()
                .iter()
                .filter(|e| e.row < 4 && e.col < 4)
                .copied()
                .collect(),
            wide(),
        )
        .unwrap();
        let local_err = rmse(|i, j| local.factors.raw(i, j), &block1).unwrap();
        let global = train_global(&train, &tcfg).unwrap();
        let global_err = rmse(|i, j| global.raw(i, j), &train).unwrap();
        assert!(local_err < 1e-2, "local {local_err}");
        assert!(global_err > 0.1, "global {global_err}");
    }

    #[test]
    fn zero_weight_entries_do_not_matter() {
        let (train, dm) = two_block();
        let kcfg = KernelConfig::default();
        let tcfg = TrainConfig {
            rank: 1,
            ..Default::default()
        };
        let before = train_local(&train, Anchor::new(0, 0), &dm, &kcfg, &tcfg).unwrap();
        let perturbed: Vec<Rating> = train
            .entries()
            .iter()
            .map(|e| {
                if e.row >= 4 {
                    Rating::new(e.row, e.col, e.value + 7.0)
                } else {
                    *e
                }
            })
            .collect();
        let perturbed = ObservedMatrix::new(8, 8, perturbed, wide()).unwrap();
        let after = train_local(&perturbed, Anchor::new(0, 0), &dm, &kcfg, &tcfg).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn empty_neighborhood_is_an_error() {
        let train = ObservedMatrix::new(2, 2, vec![Rating::new(0, 0, 3.0)], RatingScale::MOVIELENS)
            .unwrap();
        let dm = DistanceModel::new(dmatrix![0.0; 1.0], dmatrix![1.0; 1.0]).unwrap();
        let err = train_local(
            &train,
            Anchor::new(0, 0),
            &dm,
            &KernelConfig::default(),
            &TrainConfig {
                rank: 1,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            LrmaError::EmptyNeighborhood { row: 0, col: 0 }
        ));
    }

    #[test]
    fn weighted_objective_edge_cases() {
        let train = random_matrix(4, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));

        let zeros = vec![0.0; train.len()];
        let (loss, gu, gv) = weighted_objective_and_gradient(&u, &v, &train, &zeros, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(gu.iter().chain(gv.iter()).all(|&g| g == 0.0));

        let ones = vec![1.0; train.len()];
        let weighted = weighted_objective_and_gradient(&u, &v, &train, &ones, 0.3).unwrap();
        let plain = objective_and_gradient(&u, &v, &train, 0.3).unwrap();
        assert_eq!(weighted, plain);

        assert!(weighted_objective_and_gradient(&u, &v, &train, &ones[1..], 0.0).is_err());
    }

    #[test]
    fn parallel_training_is_order_stable() {
        let train = random_matrix(5, 12, 10);
        let dm = random_dm(6, 12, 10);
        let kcfg = KernelConfig::new(1.0, 1.0, KernelKind::Epanechnikov).unwrap();
        let tcfg = TrainConfig {
            rank: 2,
            seed: 3,
            ..Default::default()
        };
        let anchors = sample_anchors(&train, 6, 1).unwrap();
        let par = train_local_models(&train, &anchors, &dm, &kcfg, &tcfg);
        let seq: Vec<_> = anchors
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let cfg = TrainConfig {
                    seed: anchor_seed(3, k),
                    ..tcfg.clone()
                };
                train_local(&train, a, &dm, &kcfg, &cfg)
            })
            .collect();
        for (p, s) in par.iter().zip(&seq) {
            assert_eq!(p.as_ref().unwrap(), s.as_ref().unwrap());
        }
    }

    #[test]
    fn anchor_seeds_differ() {
        assert_ne!(anchor_seed(0, 0), anchor_seed(0, 1));
        assert_ne!(anchor_seed(0, 1), anchor_seed(1, 0));
    }

    proptest! {
        #[test]
        fn zero_weight_perturbation_is_invisible(
            seed: u64,
            anchor_row in 0usize..4,
            anchor_col in 0usize..4,
            shift in -50.0f64..50.0,
        ) {
            let (train, dm) = two_block();
            let kcfg = KernelConfig::default();
            let tcfg = TrainConfig { rank: 1, seed, ..Default::default() };
            let anchor = Anchor::new(anchor_row, anchor_col);
            let w = entry_weights(&train, anchor, &dm, &kcfg).unwrap();
            let perturbed: Vec<Rating> = train
                .entries()
                .iter()
                .zip(&w)
                .map(|(e, &wk)| if wk == 0.0 { Rating::new(e.row, e.col, e.value + shift) } else { *e })
                .collect();
            let perturbed = ObservedMatrix::new(8, 8, perturbed, wide()).unwrap();
            let before = train_local(&train, anchor, &dm, &kcfg, &tcfg).unwrap();
            let after = train_local(&perturbed, anchor, &dm, &kcfg, &tcfg).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn unit_kernel_matches_global(seed: u64, rank in 1usize..4) {
            let train = random_matrix(seed, 6, 5);
            prop_assume!(!train.is_empty());
            let dm = random_dm(seed, 6, 5);
            let kcfg = KernelConfig::new(10.0, 10.0, KernelKind::Uniform).unwrap();
            let tcfg = TrainConfig { rank, seed, max_epochs: 20, ..Default::default() };
            let anchor = Anchor::new(train.entries()[0].row, train.entries()[0].col);
            let local = train_local(&train, anchor, &dm, &kcfg, &tcfg).unwrap();
            prop_assert_eq!(local.factors, train_global(&train, &tcfg).unwrap());
        }
    }
}
