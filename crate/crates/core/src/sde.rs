//! Closed-loop Monte Carlo for the controlled kinematic SDE
//! `dR = RΩ̂ dt + σ R ê_i ∘ dW_i`.
//!
//! Integration is geometric Euler–Maruyama, `R ← R·exp(hat(Ω dt + σ√dt ξ))`,
//! which keeps every state on the group to rounding. Each particle owns a
//! ChaCha8 stream seeded with `seed + index`, so results do not depend on the
//! number of worker threads. Seeds closer together than the ensemble size
//! share most particle streams; space seeds by at least `n_particles` for
//! independent runs.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bridge::BridgeSolution;
use crate::error::{invalid, Error, Result};
use crate::group::{exp_so3, log_so3, DensityGrid, GroupGrid, GroupId, RotationElement, TangentVector};
use crate::heat::SemigroupOperator;

/// Smallest ensemble accepted by [`simulate_bridge`].
pub const MIN_PARTICLES: usize = 1000;

/// Default number of equal-width bins for total-variation comparisons.
pub const DEFAULT_TV_BINS: usize = 64;

/// A (possibly state- and time-dependent) drift `Ω(R, t)`.
pub trait Drift: Sync {
    fn at(&self, state: &RotationElement, t: f64) -> TangentVector;
}

/// The same Lie-algebra vector everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDrift(pub TangentVector);

impl Drift for ConstantDrift {
    fn at(&self, _: &RotationElement, _: f64) -> TangentVector {
        self.0
    }
}

/// Scalar control tabulated on a grid and a time grid, interpolated linearly
/// in both the angle coordinate and time.
///
/// On SO(3) the scalar is the component along the rotation axis of the state.
#[derive(Debug, Clone)]
pub struct ControlField {
    grid: Arc<GroupGrid>,
    times: Vec<f64>,
    table: Vec<Vec<f64>>,
}

impl ControlField {
    pub fn new(grid: Arc<GroupGrid>, times: Vec<f64>, table: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != table.len() {
            return Err(invalid("times", format!("{} times for {} rows", times.len(), table.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("times", "must be strictly increasing"));
        }
        if let Some(row) = table.iter().find(|r| r.len() != grid.len()) {
            return Err(Error::Dimension {
                expected: grid.len(),
                got: row.len(),
            });
        }
        if table.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control table"));
        }
        Ok(Self { grid, times, table })
    }

    /// `Ω ≡ 0`.
    pub fn zero(grid: Arc<GroupGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            times: vec![0.0],
            table: vec![vec![0.0; n]],
        }
    }

    /// Control of `sol` tabulated at `times`.
    ///
    /// Operators are built per time and dropped, so long time grids do not
    /// grow the problem's operator cache.
    pub fn from_solution(sol: &BridgeSolution, times: &[f64]) -> Result<Self> {
        let p = sol.problem();
        let table = times
            .iter()
            .map(|&t| {
                if !(0.0..=1.0).contains(&t) {
                    return Err(Error::TimeOutOfRange(t));
                }
                let op = SemigroupOperator::new(p.semigroup().kernel(), p.grid().clone(), 1.0 - t)?;
                let log_phi = op.apply_log(sol.potentials().log_phi1.log_values())?;
                Ok(crate::bridge::control_scalar(p, sol.calculus(), &log_phi))
            })
            .collect::<Result<_>>()?;
        Self::new(p.grid().clone(), times.to_vec(), table)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn in_space(&self, row: &[f64], angle: f64) -> f64 {
        let n = self.grid.len();
        let h = self.grid.spacing();
        match self.grid.group() {
            GroupId::So2 => {
                let x = angle.rem_euclid(2.0 * PI) / h;
                let i = x.floor();
                let f = x - i;
                let i = i as usize % n;
                (1.0 - f) * row[i] + f * row[(i + 1) % n]
            }
            GroupId::So3 => {
                let x = (angle / h - 0.5).clamp(0.0, (n - 1) as f64);
                let i = (x.floor() as usize).min(n - 2);
                let f = x - i as f64;
                (1.0 - f) * row[i] + f * row[i + 1]
            }
        }
    }

    /// Interpolated scalar control at `angle` and `t`, constant outside the
    /// tabulated time range.
    pub fn scalar(&self, angle: f64, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.in_space(&self.table[0], angle);
        }
        if k == self.times.len() {
            return self.in_space(&self.table[k - 1], angle);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let f = (t - t0) / (t1 - t0);
        (1.0 - f) * self.in_space(&self.table[k - 1], angle) + f * self.in_space(&self.table[k], angle)
    }
}

impl Drift for ControlField {
    fn at(&self, state: &RotationElement, t: f64) -> TangentVector {
        match state {
            RotationElement::So2(a) => TangentVector::So2(self.scalar(*a, t)),
            RotationElement::So3(r) => {
                let w = log_so3(r);
                let theta = w.norm();
                if theta < 1e-12 {
                    return TangentVector::So3(Vector3::zeros());
                }
                TangentVector::So3(w * (self.scalar(theta, t) / theta))
            }
        }
    }
}

/// Particles on a group with independent random streams.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    group: GroupId,
    states: Vec<RotationElement>,
    rngs: Vec<ChaCha8Rng>,
    time: f64,
    seed: u64,
}

fn particle_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64))
}

impl ParticleEnsemble {
    /// Ensemble with given initial states at `t = 0`.
    pub fn new(group: GroupId, states: Vec<RotationElement>, seed: u64) -> Result<Self> {
        if let Some(s) = states.iter().find(|s| s.group() != group) {
            return Err(Error::GridMismatch(format!("{} state in a {group} ensemble", s.group())));
        }
        let rngs = (0..states.len()).map(|i| particle_rng(seed, i)).collect();
        Ok(Self {
            group,
            states,
            rngs,
            time: 0.0,
            seed,
        })
    }

    /// `n` particles drawn from `density`: inverse CDF with uniform jitter
    /// inside the cell on SO(2); on SO(3) the rotation angle is drawn by
    /// rejection against `ρ(θ)·(2/π)sin²(θ/2)` and the axis uniformly.
    pub fn sample(density: &DensityGrid, n: usize, seed: u64) -> Self {
        let grid = density.grid();
        let h = grid.spacing();
        let cdf: Vec<f64> = grid
            .weights()
            .iter()
            .zip(density.values())
            .scan(0.0, |acc, (w, r)| {
                *acc += w * r;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().unwrap_or(&1.0);
        let peak = density.values().iter().cloned().fold(0.0, f64::max);
        let draw = |rng: &mut ChaCha8Rng| match grid.group() {
            GroupId::So2 => {
                let u = rng.random::<f64>() * total;
                let i = cdf.partition_point(|&c| c <= u).min(grid.len() - 1);
                let a = grid.nodes()[i] + h * (rng.random::<f64>() - 0.5);
                RotationElement::So2(a.rem_euclid(2.0 * PI))
            }
            GroupId::So3 => {
                let theta = loop {
                    let th = PI * rng.random::<f64>();
                    let target = density.values()[grid.nearest_node(th)] * (0.5 * th).sin().powi(2);
                    if rng.random::<f64>() * peak <= target {
                        break th;
                    }
                };
                let axis = loop {
                    let v = Vector3::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    );
                    let norm = v.norm();
                    if norm > 1e-12 {
                        break v / norm;
                    }
                };
                RotationElement::So3(exp_so3(&(axis * theta)))
            }
        };
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| particle_rng(seed, i)).collect();
        let states = rngs.par_iter_mut().map(draw).collect();
        Self {
            group: grid.group(),
            states,
            rngs,
            time: 0.0,
            seed,
        }
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn states(&self) -> &[RotationElement] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Grid coordinate (angle or rotation angle) of every particle.
    pub fn angles(&self) -> Vec<f64> {
        self.states.par_iter().map(|s| s.angle()).collect()
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.states
            .par_iter()
            .map(|s| s.orthogonality_defect())
            .reduce(|| 0.0, f64::max)
    }

    /// One geometric Euler–Maruyama step of length `dt`, with the drift
    /// evaluated at the current time.
    pub fn step(&mut self, drift: &dyn Drift, sigma: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        let t = self.time;
        if let Some(s) = self.states.first() {
            let g = drift.at(s, t).group();
            if g != self.group {
                return Err(Error::GridMismatch(format!("{g} drift on a {} ensemble", self.group)));
            }
        }
        let amp = sigma * dt.sqrt();
        self.states
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .for_each(|(state, rng)| {
                *state = match (*state, drift.at(state, t)) {
                    (RotationElement::So2(a), TangentVector::So2(w)) => {
                        let xi: f64 = rng.sample(StandardNormal);
                        RotationElement::So2((a + w * dt + amp * xi).rem_euclid(2.0 * PI))
                    }
                    (RotationElement::So3(r), TangentVector::So3(w)) => {
                        let xi = Vector3::new(
                            rng.sample::<f64, _>(StandardNormal),
                            rng.sample::<f64, _>(StandardNormal),
                            rng.sample::<f64, _>(StandardNormal),
                        );
                        RotationElement::So3(r * exp_so3(&(w * dt + xi * amp)))
                    }
                    (s, _) => s,
                };
            });
        self.time += dt;
        Ok(())
    }
}

fn angle_range(group: GroupId) -> f64 {
    match group {
        GroupId::So2 => 2.0 * PI,
        GroupId::So3 => PI,
    }
}

/// Empirical probabilities of `bins` equal-width angle bins.
pub fn empirical_bins(group: GroupId, angles: &[f64], bins: usize) -> Vec<f64> {
    let width = angle_range(group) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &a in angles {
        let a = match group {
            GroupId::So2 => a.rem_euclid(2.0 * PI),
            GroupId::So3 => a,
        };
        counts[((a / width) as usize).min(bins - 1)] += 1.0;
    }
    let n = angles.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

/// Probabilities of `bins` equal-width angle bins under a grid density,
/// splitting each cell's mass by exact length overlap.
pub fn reference_bins(density: &DensityGrid, bins: usize) -> Vec<f64> {
    let grid = density.grid();
    let range = angle_range(grid.group());
    let width = range / bins as f64;
    let h = grid.spacing();
    let mut out = vec![0.0; bins];
    let mut deposit = |lo: f64, hi: f64, mass_per_len: f64| {
        let first = ((lo / width).floor() as usize).min(bins - 1);
        for (b, slot) in out.iter_mut().enumerate().skip(first) {
            let (blo, bhi) = (b as f64 * width, (b + 1) as f64 * width);
            if blo >= hi {
                break;
            }
            let overlap = hi.min(bhi) - lo.max(blo);
            if overlap > 0.0 {
                *slot += overlap * mass_per_len;
            }
        }
    };
    for (&node, (&w, &r)) in grid.nodes().iter().zip(grid.weights().iter().zip(density.values())) {
        let m = w * r / h;
        match grid.group() {
            GroupId::So2 => {
                let (lo, hi) = (node - 0.5 * h, node + 0.5 * h);
                if lo < 0.0 {
                    deposit(lo + range, range, m);
                    deposit(0.0, hi, m);
                } else if hi > range {
                    deposit(lo, range, m);
                    deposit(0.0, hi - range, m);
                } else {
                    deposit(lo, hi, m);
                }
            }
            GroupId::So3 => deposit(node - 0.5 * h, node + 0.5 * h, m),
        }
    }
    out
}

/// `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Haar-weighted histogram on the grid: particle fraction in each node's
/// cell divided by the cell weight.
pub fn grid_histogram(grid: &GroupGrid, angles: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; grid.len()];
    for &a in angles {
        counts[grid.nearest_node(a)] += 1.0;
    }
    let n = angles.len().max(1) as f64;
    counts
        .iter()
        .zip(grid.weights())
        .map(|(c, w)| c / (n * w))
        .collect()
}

/// Parameters of [`simulate_bridge`].
#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Times at which histograms are recorded, snapped to the step grid.
    pub checkpoints: Vec<f64>,
    pub bins: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            n_particles: 100_000,
            n_steps: 200,
            seed: 0,
            checkpoints: vec![0.0, 0.5, 1.0],
            bins: DEFAULT_TV_BINS,
        }
    }
}

/// Empirical marginal at one checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub t: f64,
    pub step: usize,
    pub histogram: Vec<f64>,
    pub tv: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub n_particles: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub max_orthogonality_defect: f64,
}

/// Samples `ρ₀`, integrates to `t = 1` under the optimal control and compares
/// empirical marginals against `ρᵒᵖᵗ(·,t)` at each checkpoint.
///
/// The control is tabulated at every step time and interpolated linearly in
/// time and angle.
pub fn simulate_bridge(sol: &BridgeSolution, opts: &SimulationOptions) -> Result<SimulationReport> {
    if opts.n_particles < MIN_PARTICLES {
        return Err(invalid(
            "n_particles",
            format!("need at least {MIN_PARTICLES}, got {}", opts.n_particles),
        ));
    }
    if opts.n_steps == 0 {
        return Err(invalid("n_steps", "must be positive"));
    }
    if opts.bins == 0 {
        return Err(invalid("bins", "must be positive"));
    }
    if let Some(&t) = opts.checkpoints.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::TimeOutOfRange(t));
    }
    let p = sol.problem();
    let grid = p.grid();
    let dt = 1.0 / opts.n_steps as f64;
    let step_times: Vec<f64> = (0..opts.n_steps).map(|k| k as f64 * dt).collect();
    let control = ControlField::from_solution(sol, &step_times)?;

    let mut marks: Vec<(usize, f64)> = opts
        .checkpoints
        .iter()
        .map(|&t| ((t * opts.n_steps as f64).round() as usize, t))
        .collect();
    marks.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut ens = ParticleEnsemble::sample(p.rho0(), opts.n_particles, opts.seed);
    let mut defect = ens.max_orthogonality_defect();
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next = 0;
    for k in 0..=opts.n_steps {
        while next < marks.len() && marks[next].0 == k {
            let t = k as f64 * dt;
            let angles = ens.angles();
            let reference = sol.density(t)?;
            let tv = total_variation(
                &empirical_bins(grid.group(), &angles, opts.bins),
                &reference_bins(&reference, opts.bins),
            );
            checkpoints.push(Checkpoint {
                t,
                step: k,
                histogram: grid_histogram(grid, &angles),
                tv,
            });
            next += 1;
        }
        if k < opts.n_steps {
            ens.step(&control, p.sigma(), dt)?;
            if grid.group() == GroupId::So3 {
                defect = defect.max(ens.max_orthogonality_defect());
            }
        }
    }
    Ok(SimulationReport {
        n_particles: opts.n_particles,
        n_steps: opts.n_steps,
        seed: opts.seed,
        checkpoints,
        max_orthogonality_defect: defect,
    })
}
