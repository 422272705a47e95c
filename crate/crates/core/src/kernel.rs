//! Arccos distance over per-row and per-column feature vectors, and the
//! product-form smoothing kernel over (row, col) index pairs.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{LrmaError, Result};
use crate::factor::FactorPair;

/// Angle between `x` and `y`. Zero-norm vectors are at distance `pi` from
/// everything.
pub fn arccos_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(LrmaError::shape(
            format!("length {}", x.len()),
            format!("length {}", y.len()),
        ));
    }
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(angle(dot, nx, ny))
}

#[inline]
fn angle(dot: f64, nx: f64, ny: f64) -> f64 {
    if nx == 0.0 || ny == 0.0 {
        return PI;
    }
    (dot / (nx * ny)).clamp(-1.0, 1.0).acos()
}

/// `3/4 (1 - d^2)` for `d < h`, zero otherwise. The bandwidth only enters
/// through the support indicator. The parabola is floored at zero so the
/// kernel stays non-negative when `h > 1`.
pub fn epanechnikov(d: f64, h: f64) -> f64 {
    if d < h {
        0.75 * (1.0 - d * d).max(0.0)
    } else {
        0.0
    }
}

/// `3/4 (1 - (d/h)^2)` for `d < h`: the bandwidth-normalized variant.
pub fn epanechnikov_scaled(d: f64, h: f64) -> f64 {
    if d < h {
        let t = d / h;
        0.75 * (1.0 - t * t)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `3/4 (1 - d^2) 1{d < h}`.
    Epanechnikov,
    /// `3/4 (1 - (d/h)^2) 1{d < h}`.
    EpanechnikovScaled,
    /// `1{d < h}`; an ablation baseline.
    Uniform,
}

impl FromStr for KernelKind {
    type Err = LrmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "epanechnikov-scaled" => Ok(KernelKind::EpanechnikovScaled),
            "uniform" => Ok(KernelKind::Uniform),
            other => Err(LrmaError::invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Row and column bandwidths plus the kernel shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub h1: f64,
    pub h2: f64,
    pub kind: KernelKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            h1: 0.8,
            h2: 0.8,
            kind: KernelKind::Epanechnikov,
        }
    }
}

impl KernelConfig {
    pub fn new(h1: f64, h2: f64, kind: KernelKind) -> Result<Self> {
        let cfg = KernelConfig { h1, h2, kind };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h1 > 0.0 && self.h2 > 0.0) {
            return Err(LrmaError::invalid(format!(
                "bandwidths must be positive, got h1={} h2={}",
                self.h1, self.h2
            )));
        }
        Ok(())
    }

    /// One-dimensional kernel value at distance `d` with bandwidth `h`.
    pub fn eval(&self, d: f64, h: f64) -> f64 {
        match self.kind {
            KernelKind::Epanechnikov => epanechnikov(d, h),
            KernelKind::EpanechnikovScaled => epanechnikov_scaled(d, h),
            KernelKind::Uniform => {
                if d < h {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Feature vectors used to measure row-row and column-column distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceModel {
    row_features: DMatrix<f64>,
    col_features: DMatrix<f64>,
    row_norms: Vec<f64>,
    col_norms: Vec<f64>,
}

fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect()
}

impl DistanceModel {
    pub fn new(row_features: DMatrix<f64>, col_features: DMatrix<f64>) -> Result<Self> {
        if row_features
            .iter()
            .chain(col_features.iter())
            .any(|x| !x.is_finite())
        {
            return Err(LrmaError::invalid("distance features must be finite"));
        }
        Ok(DistanceModel {
            row_norms: row_norms(&row_features),
            col_norms: row_norms(&col_features),
            row_features,
            col_features,
        })
    }

    /// Uses `U` as row features and `V` as column features.
    pub fn from_factors(factors: &FactorPair) -> Self {
        DistanceModel::new(factors.u().clone(), factors.v().clone())
            .expect("factor pairs are always finite")
    }

    pub fn n_rows(&self) -> usize {
        self.row_features.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.col_features.nrows()
    }

    pub fn row_features(&self) -> &DMatrix<f64> {
        &self.row_features
    }

    pub fn col_features(&self) -> &DMatrix<f64> {
        &self.col_features
    }

    /// Rows whose feature vector is all zeros; they are at distance `pi`
    /// from every row.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.row_norms[i] == 0.0)
            .collect()
    }

    pub fn zero_cols(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| self.col_norms[j] == 0.0)
            .collect()
    }

    pub fn row_distance(&self, a: usize, b: usize) -> f64 {
        let dot = self.row_features.row(a).dot(&self.row_features.row(b));
        angle(dot, self.row_norms[a], self.row_norms[b])
    }

    pub fn col_distance(&self, a: usize, b: usize) -> f64 {
        let dot = self.col_features.row(a).dot(&self.col_features.row(b));
        angle(dot, self.col_norms[a], self.col_norms[b])
    }

    fn check(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.n_rows() || col >= self.n_cols() {
            return Err(LrmaError::Index {
                row,
                col,
                n_rows: self.n_rows(),
                n_cols: self.n_cols(),
            });
        }
        Ok(())
    }
}

/// `K'_{h1}(a, c) * K''_{h2}(b, d)` for `s = (a, b)`, `t = (c, d)`.
pub fn product_kernel(
    s: (usize, usize),
    t: (usize, usize),
    dm: &DistanceModel,
    cfg: &KernelConfig,
) -> Result<f64> {
    dm.check(s.0, s.1)?;
    dm.check(t.0, t.1)?;
    Ok(row_kernel(dm, cfg, s.0, t.0) * col_kernel(dm, cfg, s.1, t.1))
}

#[inline]
pub(crate) fn row_kernel(dm: &DistanceModel, cfg: &KernelConfig, a: usize, c: usize) -> f64 {
    cfg.eval(dm.row_distance(a, c), cfg.h1)
}

#[inline]
pub(crate) fn col_kernel(dm: &DistanceModel, cfg: &KernelConfig, b: usize, d: usize) -> f64 {
    cfg.eval(dm.col_distance(b, d), cfg.h2)
}

/// The anchor's kernel matrix in factored form: entry `(i, j)` of the dense
/// matrix is `row_weights[i] * col_weights[j]`.
pub fn anchor_weight_vectors(
    anchor: (usize, usize),
    dm: &DistanceModel,
    cfg: &KernelConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    dm.check(anchor.0, anchor.1)?;
    let rows = (0..dm.n_rows())
        .map(|i| row_kernel(dm, cfg, anchor.0, i))
        .collect();
    let cols = (0..dm.n_cols())
        .map(|j| col_kernel(dm, cfg, anchor.1, j))
        .collect();
    Ok((rows, cols))
}
