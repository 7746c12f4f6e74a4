//! Grids, Haar quadrature and Lie-algebra maps for SO(2) and SO(3).
//!
//! Densities are always taken with respect to the *normalized* Haar measure,
//! so the constant function 1 is a probability density on either group.
//!
//! On SO(3) only class functions (functions of the rotation angle) are
//! represented. For those the Haar integral collapses to
//!
//! ```text
//! ∫_SO(3) f dμ = ∫_0^π f(θ) (2/π) sin²(θ/2) dθ
//! ```
//!
//! which the `So3` grid discretizes with the midpoint rule.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest grid accepted by [`GroupGrid::new`].
pub const MIN_NODES: usize = 8;

/// Mass tolerance enforced when a [`DensityGrid`] is built from raw values.
pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    /// The circle group; grid nodes are angles in `[0, 2π)`.
    So2,
    /// The rotation group; grid nodes are rotation angles in `(0, π]`
    /// (conjugacy classes).
    So3,
}

impl GroupId {
    /// Dimension of the Lie algebra.
    pub fn algebra_dim(self) -> usize {
        match self {
            GroupId::So2 => 1,
            GroupId::So3 => 3,
        }
    }
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroupId::So2 => f.write_str("so2"),
            GroupId::So3 => f.write_str("so3"),
        }
    }
}

/// Quadrature grid on a group (SO(2)) or on its conjugacy classes (SO(3)).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrid {
    group: GroupId,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GroupGrid {
    /// Builds the uniform circle grid (SO(2)) or the midpoint class grid (SO(3)).
    pub fn new(group: GroupId, n_nodes: usize) -> Result<Self> {
        if n_nodes < MIN_NODES {
            return Err(Error::GridTooSmall {
                got: n_nodes,
                min: MIN_NODES,
            });
        }
        let n = n_nodes as f64;
        let (nodes, weights) = match group {
            GroupId::So2 => {
                let h = 2.0 * PI / n;
                let nodes = (0..n_nodes).map(|i| i as f64 * h).collect();
                (nodes, vec![1.0 / n; n_nodes])
            }
            GroupId::So3 => {
                let h = PI / n;
                let nodes: Vec<f64> = (0..n_nodes).map(|i| (i as f64 + 0.5) * h).collect();
                let mut weights: Vec<f64> = nodes
                    .iter()
                    .map(|&th| so3_class_weight_density(th) * h)
                    .collect();
                // The midpoint sum is exactly 1 analytically; remove rounding.
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
                (nodes, weights)
            }
        };
        Ok(Self {
            group,
            nodes,
            weights,
        })
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node spacing in radians.
    pub fn spacing(&self) -> f64 {
        match self.group {
            GroupId::So2 => 2.0 * PI / self.len() as f64,
            GroupId::So3 => PI / self.len() as f64,
        }
    }

    /// Haar integral of a grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// Index of the node closest to `angle` (periodic distance on SO(2)).
    pub fn nearest_node(&self, angle: f64) -> usize {
        match self.group {
            GroupId::So2 => {
                let h = self.spacing();
                let k = (angle.rem_euclid(2.0 * PI) / h).round() as usize;
                k % self.len()
            }
            GroupId::So3 => {
                let h = self.spacing();
                let k = (angle / h - 0.5).round();
                k.clamp(0.0, (self.len() - 1) as f64) as usize
            }
        }
    }

    pub(crate) fn check_same(&self, other: &GroupGrid) -> Result<()> {
        if std::ptr::eq(self, other) {
            return Ok(());
        }
        if self.group != other.group || self.len() != other.len() {
            return Err(Error::GridMismatch(format!(
                "{}[{}] vs {}[{}]",
                self.group,
                self.len(),
                other.group,
                other.len()
            )));
        }
        Ok(())
    }
}

/// Density of the normalized Haar measure in the rotation-angle coordinate.
pub fn so3_class_weight_density(theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    2.0 / PI * s * s
}

pub fn make_grid(group: GroupId, n_nodes: usize) -> Result<Arc<GroupGrid>> {
    GroupGrid::new(group, n_nodes).map(Arc::new)
}

/// Nonnegative grid function with unit Haar mass.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    grid: Arc<GroupGrid>,
    values: Vec<f64>,
}

impl DensityGrid {
    /// Wraps raw values, checking nonnegativity and unit mass.
    pub fn new(grid: Arc<GroupGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(invalid("values", format!("node {i} holds {v}")));
        }
        let mass = grid.integrate(&values);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassDrift { mass, tol: MASS_TOL });
        }
        Ok(Self { grid, values })
    }

    /// Builds a density from unnormalized log-values, normalizing by the
    /// discrete Haar quadrature. The max is subtracted before exponentiating.
    pub fn from_log_unnormalized(grid: Arc<GroupGrid>, log_values: &[f64]) -> Result<Self> {
        if log_values.len() != grid.len() {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: log_values.len(),
            });
        }
        let peak = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::NonFinite("density log-values"));
        }
        let mut values: Vec<f64> = log_values.iter().map(|l| (l - peak).exp()).collect();
        let mass = grid.integrate(&values);
        values.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid, values })
    }

    /// Wraps values without the unit-mass check; callers report drift themselves.
    pub(crate) fn from_values_unchecked(grid: Arc<GroupGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    /// The constant density 1.
    pub fn uniform(grid: Arc<GroupGrid>) -> Self {
        let values = vec![1.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// Fails with the first non-positive node, if any.
    pub fn check_strictly_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| v <= 0.0) {
            Some(node) => Err(Error::NotStrictlyPositive {
                node,
                value: self.values[node],
            }),
            None => Ok(()),
        }
    }

    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.ln()).collect()
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(invalid("kappa", format!("must be positive and finite, got {kappa}")));
    }
    Ok(())
}

/// Von Mises density `∝ exp(κ cos(θ − θ₀))` on the circle.
pub fn von_mises_so2(grid: &Arc<GroupGrid>, kappa: f64, theta0: f64) -> Result<DensityGrid> {
    if grid.group() != GroupId::So2 {
        return Err(Error::GridMismatch("von_mises_so2 needs an so2 grid".into()));
    }
    check_kappa(kappa)?;
    let logs: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&th| kappa * (th - theta0).cos())
        .collect();
    DensityGrid::from_log_unnormalized(grid.clone(), &logs)
}

/// Class density `∝ exp(κ cos(θ − ‖ω₀‖))` on SO(3), w.r.t. normalized Haar.
pub fn von_mises_so3_class(
    grid: &Arc<GroupGrid>,
    kappa: f64,
    omega_norm0: f64,
) -> Result<DensityGrid> {
    if grid.group() != GroupId::So3 {
        return Err(Error::GridMismatch("von_mises_so3_class needs an so3 grid".into()));
    }
    check_kappa(kappa)?;
    if !(omega_norm0 > 0.0 && omega_norm0 <= PI) {
        return Err(invalid(
            "omega_norm0",
            format!("must lie in (0, π], got {omega_norm0}"),
        ));
    }
    let logs: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&th| kappa * (th - omega_norm0).cos())
        .collect();
    DensityGrid::from_log_unnormalized(grid.clone(), &logs)
}

/// Element of the Lie algebra in vee coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TangentVector {
    So2(f64),
    So3(Vector3<f64>),
}

impl TangentVector {
    pub fn group(&self) -> GroupId {
        match self {
            TangentVector::So2(_) => GroupId::So2,
            TangentVector::So3(_) => GroupId::So3,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        match self {
            TangentVector::So2(a) => vec![*a],
            TangentVector::So3(v) => v.iter().copied().collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            TangentVector::So2(a) => a.abs(),
            TangentVector::So3(v) => v.norm(),
        }
    }
}

/// Hat map for SO(3) vectors.
pub fn hat3(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `ℝ^{dim g} → g`: scalar to a 2×2 skew matrix, 3-vector to a 3×3 one.
pub fn hat(v: &TangentVector) -> DMatrix<f64> {
    match v {
        TangentVector::So2(a) => DMatrix::from_row_slice(2, 2, &[0.0, -a, *a, 0.0]),
        TangentVector::So3(w) => {
            let m = hat3(w);
            DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
        }
    }
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds 1e-8.
pub fn vee(m: &DMatrix<f64>) -> Result<TangentVector> {
    if !m.is_square() || !(m.nrows() == 2 || m.nrows() == 3) {
        return Err(Error::Dimension {
            expected: 3,
            got: m.nrows(),
        });
    }
    let sym = (m + m.transpose()).abs().max() * 0.5;
    if sym > 1e-8 {
        return Err(Error::NotSkew(sym));
    }
    Ok(match m.nrows() {
        2 => TangentVector::So2(m[(1, 0)]),
        _ => TangentVector::So3(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])),
    })
}

/// Rodrigues formula; second-order Taylor expansion below ‖ω‖ = 1e-8.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta = w.norm();
    let wh = hat3(w);
    let wh2 = wh * wh;
    if theta < 1e-8 {
        return Matrix3::identity() + wh + wh2 * 0.5;
    }
    Matrix3::identity() + wh * (theta.sin() / theta) + wh2 * ((1.0 - theta.cos()) / (theta * theta))
}

/// Rotation angle `θ ∈ [0, π]` of an SO(3) matrix.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// Inverse of [`exp_so3`] on `‖ω‖ ≤ π`.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    let theta = rotation_angle(r);
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    if theta < 1e-6 {
        // sinθ/θ ≈ 1 - θ²/6
        return skew * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if PI - theta > 1e-4 {
        return skew * (theta / (2.0 * theta.sin()));
    }
    // Near π the skew part vanishes; recover the axis from R + I = 2nnᵀ (+ O(π-θ)).
    let b = (r + Matrix3::identity()) * 0.5;
    let k = (0..3)
        .max_by(|&a, &c| b[(a, a)].total_cmp(&b[(c, c)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = b.column(k).into();
    axis /= axis.norm();
    // fix the sign with the (small) skew part
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Element of SO(2) (an angle in `[0, 2π)`) or SO(3) (a rotation matrix).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationElement {
    So2(f64),
    So3(Matrix3<f64>),
}

impl RotationElement {
    pub fn identity(group: GroupId) -> Self {
        match group {
            GroupId::So2 => RotationElement::So2(0.0),
            GroupId::So3 => RotationElement::So3(Matrix3::identity()),
        }
    }

    pub fn group(&self) -> GroupId {
        match self {
            RotationElement::So2(_) => GroupId::So2,
            RotationElement::So3(_) => GroupId::So3,
        }
    }

    /// Right-multiplies by `exp(hat(v))`.
    pub fn right_exp(&self, v: &TangentVector) -> Result<Self> {
        match (self, v) {
            (RotationElement::So2(a), TangentVector::So2(b)) => {
                Ok(RotationElement::So2((a + b).rem_euclid(2.0 * PI)))
            }
            (RotationElement::So3(r), TangentVector::So3(w)) => {
                Ok(RotationElement::So3(r * exp_so3(w)))
            }
            _ => Err(Error::Dimension {
                expected: self.group().algebra_dim(),
                got: v.group().algebra_dim(),
            }),
        }
    }

    /// Grid coordinate: the angle on SO(2), the rotation angle on SO(3).
    pub fn angle(&self) -> f64 {
        match self {
            RotationElement::So2(a) => *a,
            RotationElement::So3(r) => rotation_angle(r),
        }
    }

    /// `max(‖RᵀR − I‖_max, |det R − 1|)`; zero on SO(2).
    pub fn orthogonality_defect(&self) -> f64 {
        match self {
            RotationElement::So2(_) => 0.0,
            RotationElement::So3(r) => {
                let e = (r.transpose() * r - Matrix3::identity()).abs().max();
                e.max((r.determinant() - 1.0).abs())
            }
        }
    }
}
