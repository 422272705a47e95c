//! Weighted low-rank fitting shared by the global and local models.
//!
//! Both models minimize
//!
//! ```text
//! sum_{(i,j) observed} w_ij ([U V^T]_ij - M_ij)^2 + lambda (|U|_F^2 + |V|_F^2)
//! ```
//!
//! with `w_ij = 1` for the global model. Entries with zero weight are never
//! stored in a [`WeightedProblem`], so they cannot influence a fit.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::ObservedMatrix;
use crate::error::{LrmaError, Result};
use crate::factor::{FactorPair, Solver, TrainConfig};

/// Factors start i.i.d. uniform in `[0, INIT_SCALE]`. A non-negative start
/// keeps ALS out of the sign-flipped basin where a row factor diverges to
/// fit a single entry (e.g. the 2x2 rank-1 completion with lambda = 0).
const INIT_SCALE: f64 = 0.01;

/// Observed entries with strictly positive weights, indexed both ways.
#[derive(Debug, Clone)]
pub(crate) struct WeightedProblem {
    n_rows: usize,
    n_cols: usize,
    /// Per row: (col, value, weight).
    rows: Vec<Vec<(usize, f64, f64)>>,
    /// Per column: (row, value, weight).
    cols: Vec<Vec<(usize, f64, f64)>>,
    nnz: usize,
}

impl WeightedProblem {
    pub(crate) fn unit(train: &ObservedMatrix) -> Self {
        Self::build(train, |_, _| 1.0)
    }

    /// Builds the working set, dropping every entry whose weight is not
    /// strictly positive.
    pub(crate) fn build(train: &ObservedMatrix, weight: impl Fn(usize, usize) -> f64) -> Self {
        let mut rows = vec![Vec::new(); train.n_rows()];
        let mut cols = vec![Vec::new(); train.n_cols()];
        let mut nnz = 0;
        for e in train.entries() {
            let w = weight(e.row, e.col);
            if w > 0.0 {
                rows[e.row].push((e.col, e.value, w));
                cols[e.col].push((e.row, e.value, w));
                nnz += 1;
            }
        }
        WeightedProblem {
            n_rows: train.n_rows(),
            n_cols: train.n_cols(),
            rows,
            cols,
            nnz,
        }
    }

    pub(crate) fn nnz(&self) -> usize {
        self.nnz
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, _, w)| w).sum()
    }

    /// Weighted squared error plus the L2 penalty.
    pub(crate) fn loss(&self, u: &DMatrix<f64>, v: &DMatrix<f64>, lambda: f64) -> f64 {
        let mut sse = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, m, w) in row {
                let r = u.row(i).dot(&v.row(j)) - m;
                sse += w * r * r;
            }
        }
        sse + lambda * (u.norm_squared() + v.norm_squared())
    }
}

/// Outcome of one fit: factors plus the per-epoch objective trace.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub factors: FactorPair,
    /// Objective after initialization followed by one value per epoch.
    pub losses: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

pub(crate) fn fit(problem: &WeightedProblem, cfg: &TrainConfig) -> Result<FitReport> {
    cfg.validate()?;
    if cfg.rank > problem.n_rows.min(problem.n_cols) {
        return Err(LrmaError::invalid(format!(
            "rank {} exceeds min({}, {})",
            cfg.rank, problem.n_rows, problem.n_cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = DMatrix::from_fn(problem.n_rows, cfg.rank, |_, _| {
        rng.random_range(0.0..=INIT_SCALE)
    });
    let mut v = DMatrix::from_fn(problem.n_cols, cfg.rank, |_, _| {
        rng.random_range(0.0..=INIT_SCALE)
    });

    let mut prev = problem.loss(&u, &v, cfg.lambda);
    let mut losses = vec![prev];
    let mut converged = false;
    let mut epochs = 0;
    let mut order: Vec<(usize, usize)> = Vec::new();
    if cfg.solver == Solver::Sgd {
        order = problem
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| (0..row.len()).map(move |k| (i, k)))
            .collect();
    }

    for epoch in 1..=cfg.max_epochs {
        match cfg.solver {
            Solver::Als => {
                u = solve_side(&problem.rows, &v, cfg.lambda);
                v = solve_side(&problem.cols, &u, cfg.lambda);
            }
            Solver::Sgd => {
                order.shuffle(&mut rng);
                sgd_epoch(problem, &order, &mut u, &mut v, cfg);
            }
        }
        epochs = epoch;
        let loss = problem.loss(&u, &v, cfg.lambda);
        if !loss.is_finite() {
            return Err(LrmaError::Divergence { epoch, loss });
        }
        losses.push(loss);
        if (prev - loss).abs() <= cfg.tolerance * prev.abs() || loss == 0.0 {
            converged = true;
            break;
        }
        prev = loss;
    }

    Ok(FitReport {
        factors: FactorPair::new(u, v)?,
        losses,
        epochs,
        converged,
    })
}

/// Solves the ridge subproblem of every row of one factor with the other
/// factor held fixed.
fn solve_side(lists: &[Vec<(usize, f64, f64)>], other: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let rank = other.ncols();
    let solved: Vec<DVector<f64>> = lists
        .par_iter()
        .map(|list| ridge_row(list, other, lambda))
        .collect();
    DMatrix::from_fn(lists.len(), rank, |i, k| solved[i][k])
}

fn ridge_row(list: &[(usize, f64, f64)], other: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let rank = other.ncols();
    if list.is_empty() {
        return DVector::zeros(rank);
    }
    let mut gram = DMatrix::<f64>::zeros(rank, rank);
    let mut rhs = DVector::<f64>::zeros(rank);
    for &(j, m, w) in list {
        let x = other.row(j);
        for a in 0..rank {
            let wa = w * x[a];
            rhs[a] += wa * m;
            for b in 0..=a {
                gram[(a, b)] += wa * x[b];
            }
        }
    }
    for a in 0..rank {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += lambda;
    }
    if let Some(chol) = gram.clone().cholesky() {
        return chol.solve(&rhs);
    }
    // Singular system (lambda = 0 with too few entries): minimum-norm solution.
    gram.svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(rank))
}

fn sgd_epoch(
    problem: &WeightedProblem,
    order: &[(usize, usize)],
    u: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    cfg: &TrainConfig,
) {
    let lr = cfg.learning_rate;
    let rank = u.ncols();
    for &(i, k) in order {
        let (j, m, w) = problem.rows[i][k];
        let err = u.row(i).dot(&v.row(j)) - m;
        for f in 0..rank {
            let uf = u[(i, f)];
            let vf = v[(j, f)];
            u[(i, f)] -= lr * (w * err * vf + cfg.lambda * uf);
            v[(j, f)] -= lr * (w * err * uf + cfg.lambda * vf);
        }
    }
}
