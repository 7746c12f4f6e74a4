//! Log-domain dynamic Sinkhorn recursion for the Schrödinger system
//!
//! ```text
//! ρ₀ = φ̂₀ · T₁φ₁,    ρ₁ = φ₁ · T₁φ̂₀
//! ```
//!
//! Eliminating `φ̂₀` gives the fixed-point map
//! `F = R_{ρ₁} ∘ T₁ ∘ R_{ρ₀} ∘ T₁` with `R_f(g) = f/g`. Each step applies `F`
//! and rescales to unit sup norm; convergence is monitored in Hilbert's
//! projective metric, in which `F` is a strict contraction.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::group::{DensityGrid, GroupGrid};
use crate::heat::{Domain, HeatKernel, HeatSemigroup};
use crate::hilbert::{hilbert_distance_log, normalize_sup_log, PositiveGridFunction};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Endpoint densities, diffusion strength and the unit-horizon semigroup.
#[derive(Debug)]
pub struct BridgeProblem {
    grid: Arc<GroupGrid>,
    rho0: DensityGrid,
    rho1: DensityGrid,
    log_rho0: Vec<f64>,
    log_rho1: Vec<f64>,
    semigroup: HeatSemigroup,
}

impl BridgeProblem {
    pub fn new(rho0: DensityGrid, rho1: DensityGrid, kernel: HeatKernel) -> Result<Self> {
        rho0.grid().check_same(rho1.grid())?;
        rho0.check_strictly_positive()?;
        rho1.check_strictly_positive()?;
        for rho in [&rho0, &rho1] {
            let mass = rho.mass();
            if (mass - 1.0).abs() > crate::group::MASS_TOL {
                return Err(Error::MassDrift {
                    mass,
                    tol: crate::group::MASS_TOL,
                });
            }
        }
        let grid = rho0.grid().clone();
        let semigroup = HeatSemigroup::new(grid.clone(), kernel)?;
        Ok(Self {
            log_rho0: rho0.log_values(),
            log_rho1: rho1.log_values(),
            grid,
            rho0,
            rho1,
            semigroup,
        })
    }

    /// Problem with the default kernel truncation for the grid.
    pub fn with_sigma(rho0: DensityGrid, rho1: DensityGrid, sigma: f64) -> Result<Self> {
        let grid = rho0.grid();
        let kernel = HeatKernel::with_defaults(grid.group(), sigma, grid.len())?;
        Self::new(rho0, rho1, kernel)
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn rho0(&self) -> &DensityGrid {
        &self.rho0
    }

    pub fn rho1(&self) -> &DensityGrid {
        &self.rho1
    }

    pub fn sigma(&self) -> f64 {
        self.semigroup.kernel().sigma()
    }

    pub fn semigroup(&self) -> &HeatSemigroup {
        &self.semigroup
    }

    /// `log T_t e^g`.
    pub fn heat_log(&self, t: f64, g: &[f64]) -> Result<Vec<f64>> {
        self.semigroup.apply(t, g, Domain::Log)
    }
}

/// Converged Schrödinger potentials `(φ₁, φ̂₀)` in log form.
#[derive(Debug, Clone)]
pub struct SchrodingerPotentials {
    pub log_phi1: PositiveGridFunction,
    pub log_phihat0: PositiveGridFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// `d_H(φ₁⁽ᵏ⁾, φ₁⁽ᵏ⁺¹⁾)` per iteration.
    pub dh_trace: Vec<f64>,
    /// Geometric-mean ratio of successive trace entries (first ratio skipped).
    pub contraction_estimate: f64,
    /// Last trace entry.
    pub terminal_residual: f64,
    pub converged: bool,
    /// `‖φ̂₀ T₁φ₁ − ρ₀‖∞ / ‖ρ₀‖∞`.
    pub marginal_residual_rho0: f64,
    /// `‖φ₁ T₁φ̂₀ − ρ₁‖∞ / ‖ρ₁‖∞`.
    pub marginal_residual_rho1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// `log F(e^g)` without normalization.
fn schrodinger_map_log(p: &BridgeProblem, log_phi1: &[f64]) -> Result<Vec<f64>> {
    let t1 = p.heat_log(1.0, log_phi1)?;
    check_finite(&t1, "T1 phi1 (kernel underflow?)")?;
    let ratio0: Vec<f64> = p.log_rho0.iter().zip(&t1).map(|(r, t)| r - t).collect();
    let t2 = p.heat_log(1.0, &ratio0)?;
    check_finite(&t2, "T1 (rho0 / T1 phi1) (kernel underflow?)")?;
    let out: Vec<f64> = p.log_rho1.iter().zip(&t2).map(|(r, t)| r - t).collect();
    check_finite(&out, "Sinkhorn update")?;
    Ok(out)
}

/// `F(f) = ρ₁ / T₁(ρ₀ / T₁ f)`, not normalized.
pub fn schrodinger_map(p: &BridgeProblem, f: &PositiveGridFunction) -> Result<PositiveGridFunction> {
    p.grid.check_same(f.grid())?;
    let out = schrodinger_map_log(p, f.log_values())?;
    PositiveGridFunction::from_log(p.grid.clone(), out)
}

/// One step `φ₁ ← F(φ₁)/‖F(φ₁)‖∞`.
pub fn sinkhorn_step(p: &BridgeProblem, log_phi1: &PositiveGridFunction) -> Result<PositiveGridFunction> {
    p.grid.check_same(log_phi1.grid())?;
    let mut out = schrodinger_map_log(p, log_phi1.log_values())?;
    normalize_sup_log(&mut out);
    PositiveGridFunction::from_log(p.grid.clone(), out)
}

/// Solves from `φ₁ ≡ 1`.
pub fn solve(p: &BridgeProblem, opts: SolverOptions) -> Result<(SchrodingerPotentials, ConvergenceReport)> {
    let init = PositiveGridFunction::constant(p.grid.clone(), 1.0)?;
    solve_from(p, &init, opts)
}

/// Solves from an arbitrary positive initial guess for `φ₁`.
///
/// Hitting `max_iter` is not an error: the report comes back with
/// `converged = false` and the full trace.
pub fn solve_from(
    p: &BridgeProblem,
    init: &PositiveGridFunction,
    opts: SolverOptions,
) -> Result<(SchrodingerPotentials, ConvergenceReport)> {
    if !(opts.tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {}", opts.tol)));
    }
    p.grid.check_same(init.grid())?;
    let mut current = init.log_values().to_vec();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let mut next = schrodinger_map_log(p, &current)?;
        normalize_sup_log(&mut next);
        let dh = hilbert_distance_log(&current, &next)?;
        trace.push(dh);
        current = next;
        if dh < opts.tol {
            converged = true;
            break;
        }
    }

    let t1_phi1 = p.heat_log(1.0, &current)?;
    let log_phihat0: Vec<f64> = p.log_rho0.iter().zip(&t1_phi1).map(|(r, t)| r - t).collect();
    check_finite(&log_phihat0, "phihat0")?;
    let potentials = SchrodingerPotentials {
        log_phi1: PositiveGridFunction::from_log(p.grid.clone(), current)?,
        log_phihat0: PositiveGridFunction::from_log(p.grid.clone(), log_phihat0)?,
    };
    let (r0, r1) = marginal_residuals(p, &potentials)?;
    let report = ConvergenceReport {
        iterations: trace.len(),
        contraction_estimate: contraction_estimate(&trace),
        terminal_residual: trace.last().copied().unwrap_or(0.0),
        dh_trace: trace,
        converged,
        marginal_residual_rho0: r0,
        marginal_residual_rho1: r1,
    };
    Ok((potentials, report))
}

/// Relative sup-norm residuals of both Schrödinger-system equations.
pub fn marginal_residuals(p: &BridgeProblem, pot: &SchrodingerPotentials) -> Result<(f64, f64)> {
    let lphi1 = pot.log_phi1.log_values();
    let lhat0 = pot.log_phihat0.log_values();
    let t_phi1 = p.heat_log(1.0, lphi1)?;
    let t_hat0 = p.heat_log(1.0, lhat0)?;
    let residual = |a: &[f64], b: &[f64], rho: &DensityGrid| {
        let sup = rho.values().iter().cloned().fold(0.0f64, f64::max);
        a.iter()
            .zip(b)
            .zip(rho.values())
            .map(|((x, y), r)| ((x + y).exp() - r).abs())
            .fold(0.0f64, f64::max)
            / sup
    };
    Ok((
        residual(lhat0, &t_phi1, &p.rho0),
        residual(lphi1, &t_hat0, &p.rho1),
    ))
}

/// Geometric mean of `trace[k+1]/trace[k]` over `k ≥ 1`.
///
/// The first ratio is dropped because it is dominated by how far the
/// initial guess sits from the slow eigendirection.
pub fn contraction_estimate(trace: &[f64]) -> f64 {
    let usable: Vec<f64> = trace.iter().copied().take_while(|v| *v > 0.0).collect();
    match usable.len() {
        0 | 1 => 0.0,
        2 => usable[1] / usable[0],
        n => (usable[n - 1] / usable[1]).powf(1.0 / (n - 2) as f64),
    }
}
