//! Recovery of the optimal bridge from converged Schrödinger potentials.
//!
//! With `φ(·,t) = T_{1−t}φ₁` and `φ̂(·,t) = T_tφ̂₀`, the optimally steered
//! density is `ρ = φφ̂`, the value function is `S = σ² log φ`, and the
//! feedback control is `Ω = (σ² R⁻¹ ∇ log φ)^∨`.
//!
//! On SO(2) derivatives are spectral. On the SO(3) class grid the gradient of
//! a class function points along the rotation axis, so the control is the
//! radial derivative `σ² ∂_θ log φ` (second-order finite differences),
//! reported along the canonical axis `e_z`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};
use crate::group::{argmax, DensityGrid, GroupGrid, GroupId, TangentVector};
use crate::sinkhorn::{BridgeProblem, SchrodingerPotentials};
use crate::spectral::CircleFft;

/// Mass drift above which [`density_at`] fails.
pub const MASS_DRIFT_ERROR: f64 = 1e-4;

/// Mass drift worth reporting as a diagnostic.
pub const MASS_DRIFT_WARN: f64 = 1e-6;

/// Default number of output time samples.
pub const DEFAULT_TIME_SAMPLES: usize = 21;

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    Ok(())
}

/// `n` uniform samples of `[0, 1]`, ending exactly at 1.
pub fn uniform_times(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

/// `log φ(·,t)` and `log φ̂(·,t)` at one time.
#[derive(Debug, Clone)]
pub struct LogPotentials {
    pub log_phi: Vec<f64>,
    pub log_phihat: Vec<f64>,
}

/// `φ(·,t) = T_{1−t}φ₁`, `φ̂(·,t) = T_tφ̂₀` at each requested time.
pub fn propagate_potentials(
    p: &BridgeProblem,
    pot: &SchrodingerPotentials,
    times: &[f64],
) -> Result<Vec<LogPotentials>> {
    times.iter().map(|&t| propagate_one(p, pot, t)).collect()
}

fn propagate_one(p: &BridgeProblem, pot: &SchrodingerPotentials, t: f64) -> Result<LogPotentials> {
    check_time(t)?;
    Ok(LogPotentials {
        log_phi: p.heat_log(1.0 - t, pot.log_phi1.log_values())?,
        log_phihat: p.heat_log(t, pot.log_phihat0.log_values())?,
    })
}

/// `ρ = exp(log φ + log φ̂)`, not renormalized.
///
/// Returns the density and its mass drift `|∫ρ − 1|`; drift beyond
/// [`MASS_DRIFT_ERROR`] is an error.
pub fn density_at(grid: &Arc<GroupGrid>, lp: &LogPotentials) -> Result<(DensityGrid, f64)> {
    let values: Vec<f64> = lp
        .log_phi
        .iter()
        .zip(&lp.log_phihat)
        .map(|(a, b)| (a + b).exp())
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("optimal density"));
    }
    let mass = grid.integrate(&values);
    let drift = (mass - 1.0).abs();
    if drift > MASS_DRIFT_ERROR {
        return Err(Error::MassDrift {
            mass,
            tol: MASS_DRIFT_ERROR,
        });
    }
    Ok((DensityGrid::from_values_unchecked(grid.clone(), values), drift))
}

/// Derivative operators on a grid: spectral on the circle, second-order
/// finite differences on the SO(3) class grid.
#[derive(Debug, Clone)]
pub struct GridCalculus {
    group: GroupId,
    h: f64,
    nodes: Vec<f64>,
    fft: Option<CircleFft>,
}

impl GridCalculus {
    pub fn new(grid: &GroupGrid) -> Self {
        Self {
            group: grid.group(),
            h: grid.spacing(),
            nodes: grid.nodes().to_vec(),
            fft: (grid.group() == GroupId::So2).then(|| CircleFft::new(grid.len())),
        }
    }

    /// `∂_θ f`.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        match &self.fft {
            Some(fft) => fft.derivative(f, 1),
            None => class_d1(f, self.h),
        }
    }

    /// `∂²_θ f`.
    pub fn d2(&self, f: &[f64]) -> Vec<f64> {
        match &self.fft {
            Some(fft) => fft.derivative(f, 2),
            None => class_d2(f, self.h),
        }
    }

    /// Laplace–Beltrami operator on (class) functions:
    /// `f''` on SO(2), `f'' + cot(θ/2) f'` on SO(3).
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let d2 = self.d2(f);
        match self.group {
            GroupId::So2 => d2,
            GroupId::So3 => {
                let d1 = self.d1(f);
                d2.iter()
                    .zip(&d1)
                    .zip(&self.nodes)
                    .map(|((a, b), th)| a + b / (0.5 * th).tan())
                    .collect()
            }
        }
    }

    /// Divergence of the radial field `q ∂_θ`: `q'` on SO(2),
    /// `q' + cot(θ/2) q` on SO(3).
    pub fn divergence(&self, q: &[f64]) -> Vec<f64> {
        let d1 = self.d1(q);
        match self.group {
            GroupId::So2 => d1,
            GroupId::So3 => d1
                .iter()
                .zip(q)
                .zip(&self.nodes)
                .map(|((a, b), th)| a + b / (0.5 * th).tan())
                .collect(),
        }
    }
}

/// Centered differences inside, second-order one-sided stencils at the ends.
fn class_d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    out
}

fn class_d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    out
}

/// Scalar control `σ² ∂_θ log φ` per node.
pub fn control_scalar(p: &BridgeProblem, calculus: &GridCalculus, log_phi: &[f64]) -> Vec<f64> {
    let s2 = p.sigma() * p.sigma();
    calculus.d1(log_phi).into_iter().map(|d| s2 * d).collect()
}

/// `Ω(·,t)` as Lie-algebra vectors.
pub fn control_at(p: &BridgeProblem, calculus: &GridCalculus, log_phi: &[f64]) -> Vec<TangentVector> {
    let scalar = control_scalar(p, calculus, log_phi);
    match p.grid().group() {
        GroupId::So2 => scalar.into_iter().map(TangentVector::So2).collect(),
        GroupId::So3 => scalar
            .into_iter()
            .map(|v| TangentVector::So3(Vector3::new(0.0, 0.0, v)))
            .collect(),
    }
}

/// Everything known about the bridge at one output time.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub t: f64,
    pub log_phi: Vec<f64>,
    pub log_phihat: Vec<f64>,
    pub rho: DensityGrid,
    pub mass_drift: f64,
    /// Value function `S = σ² log φ`.
    pub value: Vec<f64>,
    /// Scalar control `σ² ∂_θ log φ` per node.
    pub control: Vec<f64>,
}

impl TimeSlice {
    pub fn control_vectors(&self, group: GroupId) -> Vec<TangentVector> {
        match group {
            GroupId::So2 => self.control.iter().map(|&v| TangentVector::So2(v)).collect(),
            GroupId::So3 => self
                .control
                .iter()
                .map(|&v| TangentVector::So3(Vector3::new(0.0, 0.0, v)))
                .collect(),
        }
    }
}

/// Optimal densities, value function and control on a time grid.
#[derive(Debug)]
pub struct BridgeSolution {
    problem: Arc<BridgeProblem>,
    potentials: SchrodingerPotentials,
    calculus: GridCalculus,
    slices: Vec<TimeSlice>,
}

impl BridgeSolution {
    pub fn new(problem: Arc<BridgeProblem>, potentials: SchrodingerPotentials, times: &[f64]) -> Result<Self> {
        problem.grid().check_same(potentials.log_phi1.grid())?;
        let calculus = GridCalculus::new(problem.grid());
        let mut sol = Self {
            problem,
            potentials,
            calculus,
            slices: Vec::with_capacity(times.len()),
        };
        sol.slices = times.iter().map(|&t| sol.slice_at(t)).collect::<Result<_>>()?;
        Ok(sol)
    }

    /// Computes a slice at any `t ∈ [0, 1]`, independent of the stored grid.
    pub fn slice_at(&self, t: f64) -> Result<TimeSlice> {
        let p = &self.problem;
        let lp = propagate_one(p, &self.potentials, t)?;
        let (rho, mass_drift) = density_at(p.grid(), &lp)?;
        let s2 = p.sigma() * p.sigma();
        let value = lp.log_phi.iter().map(|v| s2 * v).collect();
        let control = control_scalar(p, &self.calculus, &lp.log_phi);
        Ok(TimeSlice {
            t,
            log_phi: lp.log_phi,
            log_phihat: lp.log_phihat,
            rho,
            mass_drift,
            value,
            control,
        })
    }

    pub fn problem(&self) -> &Arc<BridgeProblem> {
        &self.problem
    }

    pub fn potentials(&self) -> &SchrodingerPotentials {
        &self.potentials
    }

    pub fn calculus(&self) -> &GridCalculus {
        &self.calculus
    }

    pub fn slices(&self) -> &[TimeSlice] {
        &self.slices
    }

    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.t).collect()
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.slices.iter().map(|s| s.mass_drift).fold(0.0, f64::max)
    }

    /// Node angle of `argmax ρ(·,t)` per stored time.
    pub fn argmax_trajectory(&self) -> Vec<f64> {
        let nodes = self.problem.grid().nodes();
        self.slices.iter().map(|s| nodes[argmax(s.rho.values())]).collect()
    }

    /// Density at `t` only (no control).
    pub fn density(&self, t: f64) -> Result<DensityGrid> {
        let lp = propagate_one(&self.problem, &self.potentials, t)?;
        density_at(self.problem.grid(), &lp).map(|(d, _)| d)
    }

    /// Haar-weighted L² residual of the controlled Fokker–Planck equation
    /// `∂_tρ + div(ρ∇S) − (σ²/2)Δρ` at `t`, with `∂_tρ` by centered
    /// differences of step `dt`.
    pub fn fokker_planck_residual(&self, t: f64, dt: f64) -> Result<f64> {
        self.fp_residual(t, dt, true)
    }

    /// Same residual with the drift term removed (plain heat flow).
    pub fn uncontrolled_fokker_planck_residual(&self, t: f64, dt: f64) -> Result<f64> {
        self.fp_residual(t, dt, false)
    }

    fn fp_residual(&self, t: f64, dt: f64, controlled: bool) -> Result<f64> {
        if !(dt > 0.0) || t - dt < 0.0 || t + dt > 1.0 {
            return Err(invalid(
                "t",
                format!("stencil [t - dt, t + dt] = [{}, {}] leaves [0, 1]", t - dt, t + dt),
            ));
        }
        let grid = self.problem.grid();
        let ahead = self.density(t + dt)?;
        let behind = self.density(t - dt)?;
        let here = self.slice_at(t)?;
        let rho = here.rho.values();
        let s2 = self.problem.sigma().powi(2);

        let lap = self.calculus.laplacian(rho);
        let div = if controlled {
            let flux: Vec<f64> = rho.iter().zip(&here.control).map(|(r, u)| r * u).collect();
            self.calculus.divergence(&flux)
        } else {
            vec![0.0; rho.len()]
        };
        let sq: Vec<f64> = (0..rho.len())
            .map(|i| {
                let rho_t = (ahead.values()[i] - behind.values()[i]) / (2.0 * dt);
                let r = rho_t + div[i] - 0.5 * s2 * lap[i];
                r * r
            })
            .collect();
        Ok(grid.integrate(&sq).sqrt())
    }
}

/// Angle reduced to `(−π, π]`.
fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// True when a circle path starts near `start`, ends near `end`, moves in
/// steps shorter than π/2, and never leaves the shorter arc between them by
/// more than `slack`.
pub fn stays_on_shorter_arc(trajectory: &[f64], start: f64, end: f64, slack: f64) -> bool {
    let (Some(&first), Some(&last)) = (trajectory.first(), trajectory.last()) else {
        return false;
    };
    let span = wrap_pi(end - start);
    let (lo, hi) = (span.min(0.0) - slack, span.max(0.0) + slack);
    let on_arc = trajectory.iter().all(|&a| {
        let d = wrap_pi(a - start);
        d >= lo && d <= hi
    });
    let continuous = trajectory.windows(2).all(|w| wrap_pi(w[1] - w[0]).abs() < 0.5 * PI);
    on_arc && continuous && wrap_pi(first - start).abs() <= slack && wrap_pi(last - end).abs() <= slack
}

/// True when the sequence is nondecreasing (or nonincreasing) up to `slack`.
pub fn is_monotone_within(values: &[f64], slack: f64) -> bool {
    let up = values.windows(2).all(|w| w[1] >= w[0] - slack);
    let down = values.windows(2).all(|w| w[1] <= w[0] + slack);
    up || down
}
