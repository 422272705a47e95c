//! Global low-rank model: regularized incomplete SVD fitted to the observed
//! entries only, plus the RMSE metric shared by every predictor.

use std::str::FromStr;

use nalgebra::DMatrix;

use crate::data::{ObservedMatrix, RatingScale};
use crate::error::{LrmaError, Result};
use crate::solver::{self, FitReport, WeightedProblem};

/// A rank-r factorization `U V^T`, with `U` of shape `n_rows x r` and `V` of
/// shape `n_cols x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(LrmaError::shape(
                format!("V with {} columns", u.ncols()),
                format!("{} columns", v.ncols()),
            ));
        }
        if u.ncols() == 0 {
            return Err(LrmaError::invalid("rank must be at least 1"));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(LrmaError::invalid("factor entries must be finite"));
        }
        Ok(FactorPair { u, v })
    }

    /// Factors a dense matrix through its SVD, keeping the singular values
    /// above `rel_tol * sigma_max` (at least one). Singular values are split
    /// evenly between the two sides.
    pub fn from_dense(x: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let svd = x.clone().svd(true, true);
        let (Some(left), Some(right_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
            return Err(LrmaError::invalid("SVD did not produce singular vectors"));
        };
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = idx.first().map_or(0.0, |&i| svd.singular_values[i]);
        let kept: Vec<usize> = idx
            .iter()
            .copied()
            .filter(|&i| svd.singular_values[i] > rel_tol * top && svd.singular_values[i] > 0.0)
            .collect();
        let kept = if kept.is_empty() {
            vec![idx.first().copied().unwrap_or(0)]
        } else {
            kept
        };
        let rank = kept.len();
        let u = DMatrix::from_fn(x.nrows(), rank, |i, k| {
            left[(i, kept[k])] * svd.singular_values[kept[k]].sqrt()
        });
        let v = DMatrix::from_fn(x.ncols(), rank, |j, k| {
            right_t[(kept[k], j)] * svd.singular_values[kept[k]].sqrt()
        });
        FactorPair::new(u, v)
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Unclamped `U[row] . V[col]`. Panics on out-of-range indices.
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.u.row(row).dot(&self.v.row(col))
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.n_rows() && col < self.n_cols()
    }

    /// The full `n_rows x n_cols` product.
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }
}

/// `U[row] . V[col]` clamped to the rating scale.
pub fn predict_entry(
    model: &FactorPair,
    row: usize,
    col: usize,
    scale: RatingScale,
) -> Result<f64> {
    if !model.contains(row, col) {
        return Err(LrmaError::Index {
            row,
            col,
            n_rows: model.n_rows(),
            n_cols: model.n_cols(),
        });
    }
    Ok(scale.clamp(model.raw(row, col)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Alternating ridge regressions over rows of `U` and `V`.
    Als,
    /// Plain stochastic gradient descent over shuffled entries.
    Sgd,
}

impl FromStr for Solver {
    type Err = LrmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "als" => Ok(Solver::Als),
            "sgd" => Ok(Solver::Sgd),
            other => Err(LrmaError::invalid(format!(
                "unknown factorization solver '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rank: usize,
    /// L2 coefficient on both factors.
    pub lambda: f64,
    /// Only used by [`Solver::Sgd`].
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative objective change below which training stops.
    pub tolerance: f64,
    pub seed: u64,
    pub solver: Solver,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rank: 5,
            lambda: 0.01,
            learning_rate: 0.01,
            max_epochs: 100,
            tolerance: 1e-4,
            seed: 0,
            solver: Solver::Als,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(LrmaError::invalid("rank must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LrmaError::invalid("lambda must be finite and non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LrmaError::invalid("learning rate must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(LrmaError::invalid("max_epochs must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(LrmaError::invalid("tolerance must be positive"));
        }
        Ok(())
    }
}

/// Fits the global model to every training entry.
pub fn train_global(train: &ObservedMatrix, config: &TrainConfig) -> Result<FactorPair> {
    train_global_report(train, config).map(|r| r.factors)
}

/// As [`train_global`], also returning the objective trace.
pub fn train_global_report(train: &ObservedMatrix, config: &TrainConfig) -> Result<FitReport> {
    if train.is_empty() {
        return Err(LrmaError::EmptyInput("training set has no entries"));
    }
    solver::fit(&WeightedProblem::unit(train), config)
}

pub(crate) fn check_factor_shapes(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    train: &ObservedMatrix,
) -> Result<()> {
    if u.nrows() != train.n_rows() || v.nrows() != train.n_cols() || u.ncols() != v.ncols() {
        return Err(LrmaError::shape(
            format!("U {}xr, V {}xr", train.n_rows(), train.n_cols()),
            format!(
                "U {}x{}, V {}x{}",
                u.nrows(),
                u.ncols(),
                v.nrows(),
                v.ncols()
            ),
        ));
    }
    Ok(())
}

/// Loss and exact gradients of the regularized squared error over the
/// observed entries.
pub fn objective_and_gradient(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    train: &ObservedMatrix,
    lambda: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check_factor_shapes(u, v, train)?;
    Ok(weighted_terms(u, v, train, |_| 1.0, lambda))
}

pub(crate) fn weighted_terms(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    train: &ObservedMatrix,
    weight: impl Fn(usize) -> f64,
    lambda: f64,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let mut loss = 0.0;
    let mut grad_u = u * (2.0 * lambda);
    let mut grad_v = v * (2.0 * lambda);
    for (k, e) in train.entries().iter().enumerate() {
        let w = weight(k);
        if w == 0.0 {
            continue;
        }
        let r = u.row(e.row).dot(&v.row(e.col)) - e.value;
        loss += w * r * r;
        let g = 2.0 * w * r;
        for f in 0..u.ncols() {
            grad_u[(e.row, f)] += g * v[(e.col, f)];
            grad_v[(e.col, f)] += g * u[(e.row, f)];
        }
    }
    loss += lambda * (u.norm_squared() + v.norm_squared());
    (loss, grad_u, grad_v)
}

/// Root mean squared error of `predictor` over the test entries.
pub fn rmse(predictor: impl Fn(usize, usize) -> f64, test: &ObservedMatrix) -> Result<f64> {
    if test.is_empty() {
        return Err(LrmaError::EmptyInput("test set has no entries"));
    }
    let sse: f64 = test
        .entries()
        .iter()
        .map(|e| {
            let d = predictor(e.row, e.col) - e.value;
            d * d
        })
        .sum();
    Ok((sse / test.len() as f64).sqrt())
}
