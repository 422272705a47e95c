//! Nadaraya-Watson combination of local models.
//!
//! A query `s = (row, col)` is answered as
//!
//! ```text
//! sum_i K(s_i, s) T_i(s) / sum_j K(s_j, s)
//! ```
//!
//! over the anchors `s_i`, clamped to the rating scale afterwards. Rows or
//! columns with no training data get the scale's default rating, and
//! queries outside every anchor's kernel support fall back to the global
//! model.

use rayon::prelude::*;

use crate::data::{ObservedMatrix, RatingScale};
use crate::error::{LrmaError, Result};
use crate::factor::FactorPair;
use crate::kernel::{col_kernel, row_kernel, DistanceModel, KernelConfig};
use crate::local::LocalModel;

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    locals: Vec<LocalModel>,
    dm: DistanceModel,
    kcfg: KernelConfig,
    fallback: FactorPair,
    scale: RatingScale,
    row_seen: Vec<bool>,
    col_seen: Vec<bool>,
}

/// How a prediction was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionSource {
    /// Kernel-weighted average of local models.
    Local,
    /// Row or column never observed in training.
    Unseen,
    /// No anchor has kernel mass at the query.
    EmptyNeighborhood,
}

impl EnsembleModel {
    /// Assembles the ensemble. `train` fixes which rows and columns count as
    /// seen.
    pub fn new(
        locals: Vec<LocalModel>,
        dm: DistanceModel,
        kcfg: KernelConfig,
        fallback: FactorPair,
        train: &ObservedMatrix,
    ) -> Result<Self> {
        if locals.is_empty() {
            return Err(LrmaError::invalid(
                "an ensemble needs at least one local model",
            ));
        }
        let dims = (train.n_rows(), train.n_cols());
        let mismatched = |r: usize, c: usize| (r, c) != dims;
        if mismatched(fallback.n_rows(), fallback.n_cols())
            || mismatched(dm.n_rows(), dm.n_cols())
            || locals
                .iter()
                .any(|l| mismatched(l.factors.n_rows(), l.factors.n_cols()))
        {
            return Err(LrmaError::shape(
                format!("{}x{} components", dims.0, dims.1),
                "component with different dimensions",
            ));
        }
        kcfg.validate()?;
        Ok(EnsembleModel {
            locals,
            dm,
            kcfg,
            fallback,
            scale: train.scale(),
            row_seen: (0..train.n_rows()).map(|i| train.row_seen(i)).collect(),
            col_seen: (0..train.n_cols()).map(|j| train.col_seen(j)).collect(),
        })
    }

    pub fn locals(&self) -> &[LocalModel] {
        &self.locals
    }

    pub fn fallback(&self) -> &FactorPair {
        &self.fallback
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn kernel_config(&self) -> &KernelConfig {
        &self.kcfg
    }

    fn seen(&self, row: usize, col: usize) -> bool {
        self.row_seen.get(row).copied().unwrap_or(false)
            && self.col_seen.get(col).copied().unwrap_or(false)
    }

    /// Unnormalized kernel values `K(s_i, s)`, one per local model.
    pub fn kernel_values(&self, row: usize, col: usize) -> Vec<f64> {
        self.locals
            .iter()
            .map(|l| {
                row_kernel(&self.dm, &self.kcfg, l.anchor.row, row)
                    * col_kernel(&self.dm, &self.kcfg, l.anchor.col, col)
            })
            .collect()
    }

    /// Normalized weights. Fails with [`LrmaError::EmptyNeighborhood`] when
    /// no anchor has kernel mass at the query.
    pub fn nw_weights(&self, row: usize, col: usize) -> Result<Vec<f64>> {
        if row >= self.dm.n_rows() || col >= self.dm.n_cols() {
            return Err(LrmaError::Index {
                row,
                col,
                n_rows: self.dm.n_rows(),
                n_cols: self.dm.n_cols(),
            });
        }
        normalize_kernel(&self.kernel_values(row, col))
            .ok_or(LrmaError::EmptyNeighborhood { row, col })
    }

    /// Unclamped weighted average of the local predictions, if any anchor
    /// covers the query.
    pub fn raw_local(&self, row: usize, col: usize) -> Option<f64> {
        let k = self.kernel_values(row, col);
        let raw: Vec<f64> = k
            .iter()
            .zip(&self.locals)
            .map(|(&w, l)| {
                if w > 0.0 {
                    l.factors.raw(row, col)
                } else {
                    0.0
                }
            })
            .collect();
        nw_average(&k, &raw)
    }

    pub fn predict_with_source(&self, row: usize, col: usize) -> (f64, PredictionSource) {
        if !self.seen(row, col) {
            return (self.scale.default, PredictionSource::Unseen);
        }
        match self.raw_local(row, col) {
            Some(raw) => (self.scale.clamp(raw), PredictionSource::Local),
            None => (
                self.scale.clamp(self.fallback.raw(row, col)),
                PredictionSource::EmptyNeighborhood,
            ),
        }
    }

    pub fn predict(&self, row: usize, col: usize) -> f64 {
        self.predict_with_source(row, col).0
    }

    pub fn evaluate(&self, test: &ObservedMatrix) -> Result<Metrics> {
        evaluate_with(|i, j| self.predict_with_source(i, j), test)
    }
}

/// Kernel values scaled to sum to one; `None` when the total mass is zero.
pub fn normalize_kernel(kernel: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = kernel.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(kernel.iter().map(|k| k / total).collect())
}

/// `sum_i k_i x_i / sum_i k_i`; terms with zero kernel value are skipped.
pub fn nw_average(kernel: &[f64], values: &[f64]) -> Option<f64> {
    let total: f64 = kernel.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let weighted: f64 = kernel
        .iter()
        .zip(values)
        .filter(|(k, _)| **k > 0.0)
        .map(|(k, x)| k * x)
        .sum();
    Some(weighted / total)
}

/// Held-out accuracy plus fallback diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    /// Fraction of test entries answered by the local models.
    pub coverage: f64,
    pub fallback_unseen: usize,
    pub fallback_empty: usize,
    pub n: usize,
}

/// Scores any predictor that reports its source. Per-entry errors are
/// computed in parallel and summed in test order.
pub fn evaluate_with(
    predict: impl Fn(usize, usize) -> (f64, PredictionSource) + Sync,
    test: &ObservedMatrix,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(LrmaError::EmptyInput("test set has no entries"));
    }
    let scored: Vec<(f64, PredictionSource)> = test
        .entries()
        .par_iter()
        .map(|e| {
            let (p, src) = predict(e.row, e.col);
            let d = p - e.value;
            (d * d, src)
        })
        .collect();
    let n = scored.len();
    let sse: f64 = scored.iter().map(|(s, _)| s).sum();
    let count = |want| scored.iter().filter(|(_, s)| *s == want).count();
    let local = count(PredictionSource::Local);
    Ok(Metrics {
        rmse: (sse / n as f64).sqrt(),
        coverage: local as f64 / n as f64,
        fallback_unseen: count(PredictionSource::Unseen),
        fallback_empty: count(PredictionSource::EmptyNeighborhood),
        n,
    })
}

/// Global model under the same unseen-index rule as the ensemble.
pub fn global_prediction(
    model: &FactorPair,
    train: &ObservedMatrix,
    row: usize,
    col: usize,
) -> (f64, PredictionSource) {
    if train.row_seen(row) && train.col_seen(col) {
        (
            train.scale().clamp(model.raw(row, col)),
            PredictionSource::Local,
        )
    } else {
        (train.scale().default, PredictionSource::Unseen)
    }
}

/// One evaluation record with the settings that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub q: usize,
    pub rank: usize,
    pub h1: f64,
    pub h2: f64,
    pub lambda: f64,
    pub metrics: Metrics,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str =
        "q,rank,h1,h2,lambda,rmse,coverage,fallback_unseen,fallback_empty";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.q,
            self.rank,
            self.h1,
            self.h2,
            self.lambda,
            self.metrics.rmse,
            self.metrics.coverage,
            self.metrics.fallback_unseen,
            self.metrics.fallback_empty
        )
    }
}
