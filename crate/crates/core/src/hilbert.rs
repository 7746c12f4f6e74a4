//! Hilbert's projective metric on strictly positive grid functions.
//!
//! Functions are stored by their logarithms so that ratios spanning hundreds
//! of log-units (sharp von Mises endpoints) never overflow.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::group::{DensityGrid, GroupGrid};

/// Strictly positive grid function, stored as finite log-values.
#[derive(Debug, Clone)]
pub struct PositiveGridFunction {
    grid: Arc<GroupGrid>,
    log_values: Vec<f64>,
}

impl PositiveGridFunction {
    pub fn from_log(grid: Arc<GroupGrid>, log_values: Vec<f64>) -> Result<Self> {
        if log_values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: log_values.len(),
            });
        }
        if log_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("positive grid function"));
        }
        Ok(Self { grid, log_values })
    }

    pub fn from_values(grid: Arc<GroupGrid>, values: &[f64]) -> Result<Self> {
        if let Some(node) = values.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NotStrictlyPositive {
                node,
                value: values[node],
            });
        }
        Self::from_log(grid, values.iter().map(|v| v.ln()).collect())
    }

    /// The constant function `c > 0`.
    pub fn constant(grid: Arc<GroupGrid>, c: f64) -> Result<Self> {
        let n = grid.len();
        Self::from_log(grid, vec![c.ln(); n])
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn into_log_values(self) -> Vec<f64> {
        self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// `λ·self` for `λ > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let shift = lambda.ln();
        Self {
            grid: self.grid.clone(),
            log_values: self.log_values.iter().map(|v| v + shift).collect(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        max_of(&self.log_values).exp()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// `d_H(x, y) = log max(x/y) − log min(x/y)` from log-values.
pub fn hilbert_distance_log(log_x: &[f64], log_y: &[f64]) -> Result<f64> {
    if log_x.len() != log_y.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} nodes",
            log_x.len(),
            log_y.len()
        )));
    }
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, b) in log_x.iter().zip(log_y) {
        let d = a - b;
        hi = hi.max(d);
        lo = lo.min(d);
    }
    if !(hi - lo).is_finite() {
        return Err(Error::NonFinite("Hilbert distance"));
    }
    Ok(hi - lo)
}

/// Hilbert projective distance between two positive grid functions.
pub fn d_h(x: &PositiveGridFunction, y: &PositiveGridFunction) -> Result<f64> {
    x.grid.check_same(&y.grid)?;
    hilbert_distance_log(&x.log_values, &y.log_values)
}

/// Rescales so that the sup norm is exactly 1.
pub fn normalize_sup(x: &PositiveGridFunction) -> PositiveGridFunction {
    let peak = max_of(&x.log_values);
    PositiveGridFunction {
        grid: x.grid.clone(),
        log_values: x.log_values.iter().map(|v| v - peak).collect(),
    }
}

/// In-place sup normalization of raw log-values.
pub(crate) fn normalize_sup_log(log_values: &mut [f64]) {
    let peak = max_of(log_values);
    log_values.iter_mut().for_each(|v| *v -= peak);
}

/// The ratio map `g ↦ f/g`, an isometry of `d_H`.
pub fn pointwise_ratio(f: &DensityGrid, g: &PositiveGridFunction) -> Result<PositiveGridFunction> {
    f.grid().check_same(&g.grid)?;
    f.check_strictly_positive()?;
    let log_values = f
        .values()
        .iter()
        .zip(&g.log_values)
        .map(|(a, b)| a.ln() - b)
        .collect();
    PositiveGridFunction::from_log(g.grid.clone(), log_values)
}

/// Oscillation `max − min` of log-values; equals `d_H(x, 1)`.
pub fn log_oscillation(log_values: &[f64]) -> f64 {
    max_of(log_values) - min_of(log_values)
}
