//! Invariant suite run by `liebridge run --validate-only`: semigroup law,
//! conservation, Hilbert-metric identities and the strict contraction of
//! `T₁`, all on the configured grid and kernel without solving anything.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::group::{make_grid, GroupGrid, GroupId};
use crate::heat::{Domain, HeatSemigroup};
use crate::hilbert::{d_h, hilbert_distance_log, pointwise_ratio, PositiveGridFunction};

/// Outcome of one invariant check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<28} {:.3e} (< {:.1e})", self.name, self.value, self.threshold)
    }
}

/// Random strictly positive log-function: either the exponential of a random
/// trigonometric polynomial or a mixture of two sharp bumps over a small floor.
pub fn random_log_function(grid: &GroupGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nodes = grid.nodes();
    if rng.random_bool(0.5) {
        let degree = rng.random_range(1..=6);
        let coeffs: Vec<(f64, f64)> = (0..degree)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        nodes
            .iter()
            .map(|&th| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let m = (k + 1) as f64;
                        a * (m * th).cos() + b * (m * th).sin()
                    })
                    .sum()
            })
            .collect()
    } else {
        let bump = |rng: &mut ChaCha8Rng| {
            (
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(1.0..60.0),
                rng.random_range(0.1..1.0),
            )
        };
        let (b1, b2) = (bump(rng), bump(rng));
        let floor = 10f64.powf(rng.random_range(-8.0..-1.0));
        nodes
            .iter()
            .map(|&th| {
                let v = |(c, k, w): (f64, f64, f64)| w * (k * ((th - c).cos() - 1.0)).exp();
                (floor + v(b1) + v(b2)).ln()
            })
            .collect()
    }
}

fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// `max ‖T_{0.3}T_{0.7}f − T₁f‖∞ / ‖T₁f‖∞` over the given functions.
pub fn semigroup_defect(sg: &HeatSemigroup, fs: &[Vec<f64>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for f in fs {
        let two = sg.apply(0.3, &sg.apply(0.7, f, Domain::Linear)?, Domain::Linear)?;
        let one = sg.apply(1.0, f, Domain::Linear)?;
        worst = worst.max(rel_sup(&two, &one));
    }
    Ok(worst)
}

/// `max |T_t 1 − 1|` over `t ∈ {0.01, 0.1, 0.5, 1}`.
pub fn constant_defect(sg: &HeatSemigroup) -> Result<f64> {
    let one = vec![1.0; sg.grid().len()];
    let mut worst = 0.0f64;
    for t in [0.01, 0.1, 0.5, 1.0] {
        let out = sg.apply(t, &one, Domain::Linear)?;
        worst = out.iter().fold(worst, |m, v| m.max((v - 1.0).abs()));
    }
    Ok(worst)
}

/// Largest `d_H(T₁f₁, T₁f₂) / d_H(f₁, f₂)` over `pairs` random pairs.
pub fn max_contraction_ratio(sg: &HeatSemigroup, pairs: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let grid = sg.grid();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let f1 = random_log_function(grid, rng);
        let f2 = random_log_function(grid, rng);
        let before = hilbert_distance_log(&f1, &f2)?;
        if before == 0.0 {
            continue;
        }
        let after = hilbert_distance_log(&sg.apply(1.0, &f1, Domain::Log)?, &sg.apply(1.0, &f2, Domain::Log)?)?;
        worst = worst.max(after / before);
    }
    Ok(worst)
}

fn hilbert_checks(grid: &Arc<GroupGrid>, density: &crate::group::DensityGrid, rng: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let (mut scale, mut iso) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let x = PositiveGridFunction::from_log(grid.clone(), random_log_function(grid, rng))?;
        let y = PositiveGridFunction::from_log(grid.clone(), random_log_function(grid, rng))?;
        let (a, b) = (10f64.powf(rng.random_range(-3.0..3.0)), 10f64.powf(rng.random_range(-3.0..3.0)));
        let base = d_h(&x, &y)?;
        scale = scale.max((d_h(&x.scaled(a), &y.scaled(b))? - base).abs());
        let mapped = d_h(&pointwise_ratio(density, &x)?, &pointwise_ratio(density, &y)?)?;
        iso = iso.max((mapped - base).abs());
    }
    Ok((scale, iso))
}

/// Runs every check for the configured group, grid and kernel.
pub fn invariant_suite(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = cfg.problem()?;
    let sg = problem.semigroup();
    let grid = problem.grid();

    let mut fs: Vec<Vec<f64>> = vec![problem.rho0().values().to_vec(), problem.rho1().values().to_vec()];
    fs.extend((0..4).map(|_| random_log_function(grid, &mut rng).iter().map(|v| v.exp()).collect()));
    let semigroup_tol = match grid.group() {
        GroupId::So2 => 1e-6,
        GroupId::So3 => 1e-5,
    };

    let (scale, iso) = hilbert_checks(grid, problem.rho0(), &mut rng)?;
    let circle = make_grid(GroupId::So2, 64)?;
    let one = PositiveGridFunction::constant(circle.clone(), 1.0)?;
    let bump: Vec<f64> = circle.nodes().iter().map(|t| 2.0 + t.cos()).collect();
    let analytic = (d_h(&one, &PositiveGridFunction::from_values(circle, &bump)?)? - 3f64.ln()).abs();

    Ok(vec![
        Check::below("semigroup T0.3*T0.7 = T1", semigroup_defect(sg, &fs)?, semigroup_tol),
        Check::below("T_t 1 = 1", constant_defect(sg)?, 1e-8),
        Check::below("d_H scale invariance", scale, 1e-12),
        Check::below("ratio map isometry", iso, 1e-12),
        Check::below("d_H(1, 2+cos) = log 3", analytic, 1e-12),
        Check::below("T1 contraction ratio", max_contraction_ratio(sg, 100, &mut rng)?, 1.0),
    ])
}
