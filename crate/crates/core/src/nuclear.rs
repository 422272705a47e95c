//! Dense nuclear-norm completion for small matrices.
//!
//! The constrained problem `min |X|_* s.t. |W . P(X - M)|_F < alpha` is
//! approached through its penalized form
//!
//! ```text
//! min_X  tau |X|_* + 1/2 |W . P(X - M)|_F^2
//! ```
//!
//! solved by proximal gradient steps `X <- shrink(X - step * W^2 . P(X - M))`
//! where `shrink` soft-thresholds the singular values by `step * tau`. With
//! `W = 1` this is the unweighted completion problem. Feasibility with
//! respect to `alpha` is checked on exit and reported.

use nalgebra::DMatrix;

use crate::data::ObservedMatrix;
use crate::error::{LrmaError, Result};
use crate::kernel::{DistanceModel, KernelConfig};
use crate::local::{entry_weights, Anchor};

/// Largest dimension accepted by the dense solvers.
pub const DENSE_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvtConfig {
    /// Singular-value threshold (penalty weight on the nuclear norm).
    pub tau: f64,
    /// Gradient step; at most 1 keeps the objective monotone.
    pub step: f64,
    pub max_iters: usize,
    /// Feasibility radius for the data-fit residual.
    pub alpha: f64,
    /// Relative change in `X` below which iteration stops.
    pub tolerance: f64,
    /// Per-iteration decay of the working threshold, which starts at the
    /// largest useful value and falls geometrically to `tau`. `1.0` uses
    /// `tau` throughout.
    pub continuation: f64,
    /// Nesterov extrapolation with restart whenever the step turns back.
    /// Faster, but the objective trace is no longer monotone.
    pub momentum: bool,
}

impl SvtConfig {
    /// Data-scaled defaults: `tau` is 1e-4 of the spectral norm of the
    /// observed entries and `alpha` is 1e-3 of their Frobenius norm.
    pub fn for_observed(observed: &ObservedMatrix) -> Self {
        let dense = observed.to_dense();
        let spectral = if dense.is_empty() {
            0.0
        } else {
            dense
                .clone()
                .svd(false, false)
                .singular_values
                .iter()
                .cloned()
                .fold(0.0, f64::max)
        };
        SvtConfig {
            tau: (1e-4 * spectral).max(f64::MIN_POSITIVE),
            step: 1.0,
            max_iters: 500,
            alpha: 1e-3 * dense.norm(),
            tolerance: 1e-6,
            continuation: 0.95,
            momentum: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.step > 0.0) || !(self.tolerance > 0.0) {
            return Err(LrmaError::invalid(
                "tau, step and tolerance must be positive",
            ));
        }
        if !(self.alpha >= 0.0) {
            return Err(LrmaError::invalid("alpha must be non-negative"));
        }
        if !(self.continuation > 0.0 && self.continuation <= 1.0) {
            return Err(LrmaError::invalid("continuation must lie in (0, 1]"));
        }
        if self.max_iters == 0 {
            return Err(LrmaError::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Solution plus run diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SvtReport {
    pub x: DMatrix<f64>,
    pub iterations: usize,
    /// `|W . P(X - M)|_F` at exit.
    pub residual: f64,
    pub nuclear_norm: f64,
    /// Iteration stopped on the tolerance, not on `max_iters`.
    pub converged: bool,
    /// `residual <= alpha`.
    pub feasible: bool,
    /// Penalized objective after each iteration.
    pub objective: Vec<f64>,
}

fn check_size(rows: usize, cols: usize) -> Result<()> {
    if rows > DENSE_CAP || cols > DENSE_CAP {
        return Err(LrmaError::Size {
            rows,
            cols,
            cap: DENSE_CAP,
        });
    }
    Ok(())
}

/// Sum of singular values.
pub fn nuclear_norm(x: &DMatrix<f64>) -> Result<f64> {
    check_size(x.nrows(), x.ncols())?;
    if x.is_empty() {
        return Ok(0.0);
    }
    Ok(x.clone().svd(false, false).singular_values.sum())
}

/// Soft-thresholds the singular values of `x` by `threshold`. Returns the
/// shrunk matrix and its nuclear norm.
pub fn shrink(x: &DMatrix<f64>, threshold: f64) -> (DMatrix<f64>, f64) {
    if x.is_empty() {
        return (x.clone(), 0.0);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut norm = 0.0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let s = s - threshold;
        if s <= 0.0 {
            continue;
        }
        norm += s;
        out += u.column(k) * v_t.row(k) * s;
    }
    (out, norm)
}

/// Observed cells as (row, col, value, squared weight).
type WeightedCells = Vec<(usize, usize, f64, f64)>;

fn residual_norm(x: &DMatrix<f64>, cells: &WeightedCells) -> f64 {
    cells
        .iter()
        .map(|&(i, j, m, w2)| {
            let r = x[(i, j)] - m;
            w2 * r * r
        })
        .sum::<f64>()
        .sqrt()
}

fn solve(n_rows: usize, n_cols: usize, cells: &WeightedCells, cfg: &SvtConfig) -> SvtReport {
    let mut x = DMatrix::zeros(n_rows, n_cols);
    let start_residual = residual_norm(&x, cells);
    if start_residual <= cfg.alpha {
        return SvtReport {
            x,
            iterations: 0,
            residual: start_residual,
            nuclear_norm: 0.0,
            converged: true,
            feasible: true,
            objective: vec![0.5 * start_residual * start_residual],
        };
    }

    // Above the spectral norm of the first gradient step every threshold
    // gives X = 0, so continuation starts there.
    let mut threshold = cfg.step * cfg.tau;
    if cfg.continuation < 1.0 {
        let mut g0 = DMatrix::zeros(n_rows, n_cols);
        for &(i, j, m, w2) in cells {
            g0[(i, j)] = cfg.step * w2 * m;
        }
        let top = g0.svd(false, false).singular_values.max();
        threshold = threshold.max(cfg.continuation * top);
    }

    let mut objective = Vec::new();
    let mut norm = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    // Extrapolated point and momentum coefficient.
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for it in 1..=cfg.max_iters {
        let mut g = y.clone();
        for &(i, j, m, w2) in cells {
            g[(i, j)] -= cfg.step * w2 * (y[(i, j)] - m);
        }
        let (next, next_norm) = shrink(&g, threshold);
        let at_target = threshold <= cfg.step * cfg.tau;
        threshold = (threshold * cfg.continuation).max(cfg.step * cfg.tau);
        let change = (&next - &x).norm();
        if cfg.momentum {
            // Restart when the new step points against the extrapolation.
            if (&y - &next).dot(&(&next - &x)) > 0.0 {
                t = 1.0;
                y = next.clone();
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                y = &next + (&next - &x) * ((t - 1.0) / t_next);
                t = t_next;
            }
        } else {
            y = next.clone();
        }
        let scale = x.norm().max(f64::MIN_POSITIVE);
        x = next;
        norm = next_norm;
        iterations = it;
        let r = residual_norm(&x, cells);
        objective.push(cfg.tau * norm + 0.5 * r * r);
        if at_target && change <= cfg.tolerance * scale {
            converged = true;
            break;
        }
    }
    let residual = residual_norm(&x, cells);
    SvtReport {
        x,
        iterations,
        residual,
        nuclear_norm: norm,
        converged,
        feasible: residual <= cfg.alpha,
        objective,
    }
}

/// Nuclear-norm completion with every observed entry weighted equally.
pub fn svt_complete(observed: &ObservedMatrix, cfg: &SvtConfig) -> Result<SvtReport> {
    check_size(observed.n_rows(), observed.n_cols())?;
    cfg.validate()?;
    let cells = observed
        .entries()
        .iter()
        .map(|e| (e.row, e.col, e.value, 1.0))
        .collect();
    Ok(solve(observed.n_rows(), observed.n_cols(), &cells, cfg))
}

/// Nuclear-norm completion with the data term weighted by the anchor's
/// kernel. Cells outside the kernel support are unconstrained.
pub fn svt_local(
    observed: &ObservedMatrix,
    anchor: Anchor,
    dm: &DistanceModel,
    kcfg: &KernelConfig,
    cfg: &SvtConfig,
) -> Result<SvtReport> {
    check_size(observed.n_rows(), observed.n_cols())?;
    cfg.validate()?;
    let weights = entry_weights(observed, anchor, dm, kcfg)?;
    let cells: WeightedCells = observed
        .entries()
        .iter()
        .zip(&weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(e, &w)| (e.row, e.col, e.value, w * w))
        .collect();
    if cells.is_empty() {
        return Err(LrmaError::EmptyNeighborhood {
            row: anchor.row,
            col: anchor.col,
        });
    }
    Ok(solve(observed.n_rows(), observed.n_cols(), &cells, cfg))
}
