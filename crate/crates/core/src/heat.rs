//! Heat kernels and the heat semigroup `T_t = exp(t σ²Δ/2)` on the grids of
//! [`crate::group`].
//!
//! All kernels are densities w.r.t. normalized Haar measure, so `T_t 1 = 1`
//! on both groups. The SO(2) operator is circulant and applied by FFT in the
//! linear domain; the SO(3) class operator is a dense matrix. Both also keep
//! an elementwise log-kernel for log-sum-exp application, which is what the
//! Sinkhorn iteration uses.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::group::{GroupGrid, GroupId};
use crate::spectral::CircleFft;

/// Floor applied to truncated kernels that dip below zero.
pub const KERNEL_FLOOR: f64 = 1e-300;

/// Default SO(3) series truncation.
pub const DEFAULT_L_MAX: usize = 60;

// Fourier tail below e^-40 relative to the leading term counts as converged.
const TAIL_EXPONENT: f64 = 40.0;

// Minimum rows per parallel task.
const PAR_ROWS: usize = 128;

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive and finite, got {sigma}")));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("kernel time must be positive, got {t}")));
    }
    Ok(())
}

/// Fourier-series heat kernel on the circle, truncated at `|m| ≤ m_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelSo2 {
    pub sigma: f64,
    pub m_max: usize,
}

impl HeatKernelSo2 {
    pub fn new(sigma: f64, m_max: usize) -> Result<Self> {
        check_sigma(sigma)?;
        if m_max == 0 {
            return Err(invalid("m_max", "must be positive"));
        }
        Ok(Self { sigma, m_max })
    }

    /// Spectral coefficient `e^{-σ²m²t/2}` of mode `m`.
    pub fn coefficient(&self, m: i64, t: f64) -> f64 {
        (-0.5 * self.sigma * self.sigma * (m * m) as f64 * t).exp()
    }

    /// `Σ_{|m|≤m_max} e^{-σ²m²t/2} cos(mΔθ)`, floored at [`KERNEL_FLOOR`].
    pub fn value(&self, t: f64, dtheta: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.fourier_sum(t, dtheta).max(KERNEL_FLOOR))
    }

    fn fourier_sum(&self, t: f64, dtheta: f64) -> f64 {
        let mut s = 1.0;
        for m in 1..=self.m_max as i64 {
            let c = self.coefficient(m, t);
            if c == 0.0 {
                break;
            }
            s += 2.0 * c * (m as f64 * dtheta).cos();
        }
        s
    }

    /// Accurate `log k_t(Δθ)`, also far in the tails where the Fourier sum
    /// has lost all relative precision.
    ///
    /// When the Fourier tail beyond `m_max` is negligible and `σ²t < 1` the
    /// kernel is evaluated as a wrapped Gaussian (Poisson summation of the
    /// same series); otherwise the truncated sum is used directly.
    pub fn log_value(&self, t: f64, dtheta: f64) -> Result<f64> {
        check_time(t)?;
        let s = self.sigma * self.sigma * t;
        let tail = 0.5 * s * ((self.m_max + 1) as f64).powi(2);
        if s < 1.0 && tail > TAIL_EXPONENT {
            Ok(log_wrapped_gaussian(s, dtheta))
        } else {
            Ok(self.fourier_sum(t, dtheta).max(KERNEL_FLOOR).ln())
        }
    }
}

/// `log( sqrt(2π/s) Σ_n exp(-(θ + 2πn)²/(2s)) )`.
fn log_wrapped_gaussian(s: f64, dtheta: f64) -> f64 {
    let th = (dtheta + PI).rem_euclid(2.0 * PI) - PI;
    let n_img = ((2.0 * s * 50.0).sqrt() / (2.0 * PI)).ceil() as i64 + 1;
    let terms: Vec<f64> = (-n_img..=n_img)
        .map(|n| {
            let x = th + 2.0 * PI * n as f64;
            -x * x / (2.0 * s)
        })
        .collect();
    0.5 * (2.0 * PI / s).ln() + log_sum_exp(&terms)
}

/// SO(3) heat kernel as a character series in the relative rotation angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatKernelSo3 {
    pub sigma: f64,
    pub l_max: usize,
}

impl HeatKernelSo3 {
    pub fn new(sigma: f64, l_max: usize) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self { sigma, l_max })
    }

    /// Eigenvalue factor `e^{-ℓ(ℓ+1)σ²t/2}`.
    pub fn coefficient(&self, l: usize, t: f64) -> f64 {
        let l = l as f64;
        (-0.5 * l * (l + 1.0) * self.sigma * self.sigma * t).exp()
    }

    /// `Σ_ℓ (2ℓ+1) e^{-ℓ(ℓ+1)σ²t/2} χ_ℓ(θ)`, floored at [`KERNEL_FLOOR`].
    pub fn value(&self, t: f64, theta12: f64) -> Result<f64> {
        check_time(t)?;
        let s: f64 = (0..=self.l_max)
            .map(|l| (2 * l + 1) as f64 * self.coefficient(l, t) * character(l, theta12))
            .sum();
        Ok(s.max(KERNEL_FLOOR))
    }

    /// Smallest time at which the dropped tail of the series is below
    /// `e^{-40}` relative to the leading term.
    pub fn t_min(&self) -> f64 {
        let l = self.l_max as f64;
        2.0 * TAIL_EXPONENT / (self.sigma * self.sigma * l * (l + 1.0))
    }

    /// Degree used at time `t`: `l_max`, raised for `t < t_min` until the
    /// tail is negligible, but never above `cap`.
    pub fn effective_l_max(&self, t: f64, cap: usize) -> usize {
        if t <= 0.0 || t >= self.t_min() {
            return self.l_max;
        }
        let x = 2.0 * TAIL_EXPONENT / (self.sigma * self.sigma * t);
        let needed = (0.5 * (-1.0 + (1.0 + 4.0 * x).sqrt())).ceil() as usize;
        needed.min(cap).max(self.l_max)
    }
}

/// Character of the spin-ℓ irrep: `sin((ℓ+½)θ)/sin(θ/2)`, `2ℓ+1` at θ = 0.
pub fn character(l: usize, theta: f64) -> f64 {
    let half = (0.5 * theta).sin();
    if half.abs() < 1e-12 {
        return (2 * l + 1) as f64;
    }
    ((l as f64 + 0.5) * theta).sin() / half
}

pub fn kernel_value_so2(k: &HeatKernelSo2, t: f64, dtheta: f64) -> Result<f64> {
    k.value(t, dtheta)
}

pub fn kernel_value_so3(k: &HeatKernelSo3, t: f64, theta12: f64) -> Result<f64> {
    k.value(t, theta12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatKernel {
    So2(HeatKernelSo2),
    So3(HeatKernelSo3),
}

impl HeatKernel {
    /// Kernel for `group` with default truncation for an `n`-node grid
    /// (`m_max = n/2` on SO(2), `l_max = 60` on SO(3)).
    pub fn with_defaults(group: GroupId, sigma: f64, n: usize) -> Result<Self> {
        Ok(match group {
            GroupId::So2 => HeatKernel::So2(HeatKernelSo2::new(sigma, (n / 2).max(1))?),
            GroupId::So3 => HeatKernel::So3(HeatKernelSo3::new(sigma, DEFAULT_L_MAX)?),
        })
    }

    pub fn group(&self) -> GroupId {
        match self {
            HeatKernel::So2(_) => GroupId::So2,
            HeatKernel::So3(_) => GroupId::So3,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            HeatKernel::So2(k) => k.sigma,
            HeatKernel::So3(k) => k.sigma,
        }
    }

    pub fn truncation(&self) -> usize {
        match self {
            HeatKernel::So2(k) => k.m_max,
            HeatKernel::So3(k) => k.l_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Linear,
    Log,
}

#[derive(Debug)]
enum Repr {
    Identity,
    Circulant {
        fft: CircleFft,
        /// Real multiplier per FFT bin (aliased sum of mode coefficients).
        multipliers: Vec<f64>,
        /// `log k_t(2πd/n) + log(1/n)` per offset `d`.
        log_kernel: Vec<f64>,
    },
    Dense {
        /// Row-major `K[i][j]·w[j]`.
        matrix: Vec<f64>,
        log_matrix: Vec<f64>,
    },
}

/// `T_t` materialized on a grid.
#[derive(Debug)]
pub struct SemigroupOperator {
    grid: Arc<GroupGrid>,
    t: f64,
    repr: Repr,
}

impl SemigroupOperator {
    pub fn new(kernel: &HeatKernel, grid: Arc<GroupGrid>, t: f64) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("t", format!("must be nonnegative, got {t}")));
        }
        if kernel.group() != grid.group() {
            return Err(Error::GridMismatch(format!(
                "{} kernel on {} grid",
                kernel.group(),
                grid.group()
            )));
        }
        let n = grid.len();
        let repr = if t == 0.0 {
            Repr::Identity
        } else {
            match kernel {
                HeatKernel::So2(k) => {
                    let mut multipliers = vec![0.0; n];
                    for m in -(k.m_max as i64)..=(k.m_max as i64) {
                        let c = k.coefficient(m, t);
                        if c == 0.0 {
                            continue;
                        }
                        multipliers[m.rem_euclid(n as i64) as usize] += c;
                    }
                    let log_w = -(n as f64).ln();
                    let log_kernel = (0..n)
                        .map(|d| {
                            k.log_value(t, 2.0 * PI * d as f64 / n as f64)
                                .map(|v| v + log_w)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Repr::Circulant {
                        fft: CircleFft::new(n),
                        multipliers,
                        log_kernel,
                    }
                }
                HeatKernel::So3(k) => {
                    let (matrix, log_matrix) = so3_class_matrix(k, &grid, t);
                    Repr::Dense { matrix, log_matrix }
                }
            }
        };
        Ok(Self { grid, t, repr })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    /// Kernel value `k_t(θ_i, θ_j)` between two nodes (no quadrature weight).
    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        let n = self.grid.len();
        match &self.repr {
            Repr::Identity => {
                if i == j {
                    1.0 / self.grid.weights()[j]
                } else {
                    0.0
                }
            }
            Repr::Circulant { log_kernel, .. } => {
                let d = (i + n - j) % n;
                let d = d.min(n - d);
                (log_kernel[d] + (n as f64).ln()).exp()
            }
            Repr::Dense { matrix, .. } => {
                let (a, b) = (i.min(j), i.max(j));
                matrix[a * n + b] / self.grid.weights()[b]
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "operator on {} nodes applied to {} values",
                self.grid.len(),
                len
            )));
        }
        Ok(())
    }

    pub fn apply(&self, f: &[f64], domain: Domain) -> Result<Vec<f64>> {
        match domain {
            Domain::Linear => self.apply_linear(f),
            Domain::Log => self.apply_log(f),
        }
    }

    /// `(T_t f)(θ_i) = Σ_j k_t(θ_i, θ_j) f_j w_j`; requires `f ≥ 0`.
    pub fn apply_linear(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        if let Some(v) = f.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(invalid("f", format!("linear domain needs finite f ≥ 0, got {v}")));
        }
        let n = f.len();
        Ok(match &self.repr {
            Repr::Identity => f.to_vec(),
            Repr::Circulant {
                fft, multipliers, ..
            } => fft.filter(f, multipliers),
            Repr::Dense { matrix, .. } => rows(n)
                .map(|i| {
                    matrix[i * n..(i + 1) * n]
                        .iter()
                        .zip(f)
                        .map(|(k, x)| k * x)
                        .sum()
                })
                .collect(),
        })
    }

    /// `log T_t(e^g)` by per-row log-sum-exp; `-∞` entries of `g` are zeros.
    pub fn apply_log(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g.len())?;
        if g.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::NonFinite("log-domain semigroup input"));
        }
        let n = g.len();
        Ok(match &self.repr {
            Repr::Identity => g.to_vec(),
            Repr::Circulant { log_kernel, .. } => rows(n)
                .map(|i| lse_by(n, |j| log_kernel[(i + n - j) % n] + g[j]))
                .collect(),
            Repr::Dense { log_matrix, .. } => rows(n)
                .map(|i| {
                    let row = &log_matrix[i * n..(i + 1) * n];
                    lse_by(n, |j| row[j] + g[j])
                })
                .collect(),
        })
    }
}

fn rows(n: usize) -> rayon::iter::MinLen<rayon::range::Iter<usize>> {
    (0..n).into_par_iter().with_min_len(PAR_ROWS)
}

fn lse_by(n: usize, term: impl Fn(usize) -> f64) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    for j in 0..n {
        peak = peak.max(term(j));
    }
    if peak == f64::NEG_INFINITY {
        return peak;
    }
    let s: f64 = (0..n).map(|j| (term(j) - peak).exp()).sum();
    peak + s.ln()
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    lse_by(x.len(), |j| x[j])
}

/// Class-averaged kernel `Σ_ℓ e^{-ℓ(ℓ+1)σ²t/2} χ_ℓ(θ_i) χ_ℓ(θ_j)` times `w_j`,
/// with its elementwise log.
///
/// This is the SO(3) kernel integrated over the conjugacy class of the
/// second argument, i.e. the action of `T_t` on class functions.
fn so3_class_matrix(k: &HeatKernelSo3, grid: &GroupGrid, t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len();
    // midpoint quadrature on n class nodes is exact for degrees below n
    let terms = k.effective_l_max(t, n.saturating_sub(1)) + 1;
    let chi = DMatrix::from_fn(n, terms, |i, l| character(l, grid.nodes()[i]));
    let mut scaled = chi.clone();
    for l in 0..terms {
        let c = k.coefficient(l, t);
        scaled.column_mut(l).scale_mut(c);
    }
    let kmat = &scaled * chi.transpose();
    let w = grid.weights();
    let mut matrix = vec![0.0; n * n];
    let mut log_matrix = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // symmetrize exactly: K is symmetric in exact arithmetic
            let kij = if i <= j { kmat[(i, j)] } else { kmat[(j, i)] };
            let kij = kij.max(KERNEL_FLOOR);
            matrix[i * n + j] = kij * w[j];
            log_matrix[i * n + j] = kij.ln() + w[j].ln();
        }
    }
    (matrix, log_matrix)
}

/// Kernel plus grid, with a cache of operators keyed by time.
#[derive(Debug)]
pub struct HeatSemigroup {
    grid: Arc<GroupGrid>,
    kernel: HeatKernel,
    cache: Mutex<HashMap<u64, Arc<SemigroupOperator>>>,
}

impl HeatSemigroup {
    pub fn new(grid: Arc<GroupGrid>, kernel: HeatKernel) -> Result<Self> {
        if kernel.group() != grid.group() {
            return Err(Error::GridMismatch(format!(
                "{} kernel on {} grid",
                kernel.group(),
                grid.group()
            )));
        }
        Ok(Self {
            grid,
            kernel,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> &Arc<GroupGrid> {
        &self.grid
    }

    pub fn kernel(&self) -> &HeatKernel {
        &self.kernel
    }

    /// Returns the cached `T_t`, building it on first use.
    pub fn operator(&self, t: f64) -> Result<Arc<SemigroupOperator>> {
        let key = t.to_bits();
        if let Some(op) = self.cache.lock().expect("operator cache poisoned").get(&key) {
            return Ok(op.clone());
        }
        // Built outside the lock; a concurrent builder of the same key just loses.
        let op = Arc::new(SemigroupOperator::new(&self.kernel, self.grid.clone(), t)?);
        let mut cache = self.cache.lock().expect("operator cache poisoned");
        Ok(cache.entry(key).or_insert(op).clone())
    }

    pub fn apply(&self, t: f64, f: &[f64], domain: Domain) -> Result<Vec<f64>> {
        self.operator(t)?.apply(f, domain)
    }

    pub fn cached_operators(&self) -> usize {
        self.cache.lock().expect("operator cache poisoned").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::make_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn so2(n: usize, sigma: f64) -> HeatSemigroup {
        let g = make_grid(GroupId::So2, n).unwrap();
        let k = HeatKernel::with_defaults(GroupId::So2, sigma, n).unwrap();
        HeatSemigroup::new(g, k).unwrap()
    }

    fn so3(m: usize, sigma: f64) -> HeatSemigroup {
        let g = make_grid(GroupId::So3, m).unwrap();
        let k = HeatKernel::with_defaults(GroupId::So3, sigma, m).unwrap();
        HeatSemigroup::new(g, k).unwrap()
    }

    fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            / scale
    }

    fn random_positive(rng: &mut ChaCha8Rng, grid: &GroupGrid) -> Vec<f64> {
        // smooth random positive function: exp of a few random modes
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
        let p: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..6.3)).collect();
        grid.nodes()
            .iter()
            .map(|&t| {
                let s: f64 = (0..4).map(|m| a[m] * ((m + 1) as f64 * t + p[m]).cos()).sum();
                s.exp()
            })
            .collect()
    }

    #[test]
    fn so2_kernel_long_time_is_flat() {
        let k = HeatKernelSo2::new(1.0, 256).unwrap();
        for d in [0.0, 0.4, PI, 5.0] {
            assert!((kernel_value_so2(&k, 100.0, d).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(kernel_value_so2(&k, 0.0, 0.0).is_err());
        assert!(kernel_value_so2(&k, -1.0, 0.0).is_err());
    }

    #[test]
    fn so2_kernel_integrates_to_one() {
        let g = make_grid(GroupId::So2, 256).unwrap();
        let k = HeatKernelSo2::new(1.0, 128).unwrap();
        for t in [0.05, 0.3, 1.0] {
            let vals: Vec<f64> = g.nodes().iter().map(|&d| k.value(t, d).unwrap()).collect();
            assert!((g.integrate(&vals) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn so2_kernel_truncation_converged() {
        // brute-force partial sum with twice the modes
        let brute: f64 = (-512i64..=512)
            .map(|m| (-0.5 * (m * m) as f64 * 0.1).exp())
            .sum();
        let k = HeatKernelSo2::new(1.0, 256).unwrap();
        let v = k.value(0.1, 0.0).unwrap();
        assert!((v - brute).abs() / brute < 1e-10);
    }

    #[test]
    fn so2_log_kernel_matches_fourier_where_both_are_accurate() {
        let k = HeatKernelSo2::new(1.0, 256).unwrap();
        for t in [0.05, 0.2, 0.9] {
            for d in [0.0, 0.3, 1.0, 2.0] {
                let fourier = k.value(t, d).unwrap();
                if fourier < 1e-6 {
                    continue;
                }
                let a = k.log_value(t, d).unwrap();
                let b = fourier.ln();
                assert!((a - b).abs() < 1e-10, "t={t} d={d}: {a} vs {b}");
            }
        }
        // deep tail: still finite and monotone in distance
        let near = k.log_value(0.01, 2.0).unwrap();
        let far = k.log_value(0.01, PI).unwrap();
        assert!(far.is_finite() && far < near);
    }

    #[test]
    fn so3_kernel_long_time_is_flat() {
        let k = HeatKernelSo3::new(0.5, 60).unwrap();
        for th in [PI / 3.0, 1.5, 2.5, PI] {
            assert!((kernel_value_so3(&k, 100.0, th).unwrap() - 1.0).abs() < 1e-10);
        }
        // at θ = 0 the ℓ = 1 remainder is 9e^{-25} ≈ 1.25e-10
        let v0 = kernel_value_so3(&k, 100.0, 0.0).unwrap();
        assert!((v0 - 1.0 - 9.0 * (-25.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn so3_kernel_at_zero_uses_limit() {
        let k = HeatKernelSo3::new(0.5, 5).unwrap();
        let t = 0.3;
        let expected: f64 = (0..=5usize)
            .map(|l| ((2 * l + 1) as f64).powi(2) * (-((l * (l + 1)) as f64) * 0.25 * t / 2.0).exp())
            .sum();
        assert!((k.value(t, 0.0).unwrap() - expected).abs() < 1e-12);
        assert!((character(7, 1e-14) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn so3_kernel_integrates_to_one() {
        let g = make_grid(GroupId::So3, 400).unwrap();
        let k = HeatKernelSo3::new(0.5, 60).unwrap();
        let vals: Vec<f64> = g.nodes().iter().map(|&th| k.value(0.5, th).unwrap()).collect();
        assert!((g.integrate(&vals) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_is_fixed() {
        for sg in [so2(512, 1.0), so3(400, 0.5)] {
            let one = vec![1.0; sg.grid().len()];
            for t in [0.1, 0.5, 1.0] {
                let lin = sg.apply(t, &one, Domain::Linear).unwrap();
                let log = sg.apply(t, &vec![0.0; one.len()], Domain::Log).unwrap();
                assert!(lin.iter().all(|v| (v - 1.0).abs() < 1e-8));
                assert!(log.iter().all(|v| v.abs() < 1e-8));
            }
        }
    }

    #[test]
    fn log_and_linear_domains_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sg in [so2(512, 1.0), so2(64, 0.7), so3(400, 0.5)] {
            for t in [0.2, 1.0] {
                let f = random_positive(&mut rng, sg.grid());
                let g: Vec<f64> = f.iter().map(|v| v.ln()).collect();
                let lin = sg.apply(t, &f, Domain::Linear).unwrap();
                let log = sg.apply(t, &g, Domain::Log).unwrap();
                for (a, b) in lin.iter().zip(&log) {
                    assert!((a.ln() - b).abs() < 1e-10, "{} vs {}", a.ln(), b);
                }
            }
        }
    }

    #[test]
    fn semigroup_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sg = so2(512, 1.0);
        let f = random_positive(&mut rng, sg.grid());
        let two = sg
            .apply(0.3, &sg.apply(0.7, &f, Domain::Linear).unwrap(), Domain::Linear)
            .unwrap();
        let one = sg.apply(1.0, &f, Domain::Linear).unwrap();
        assert!(rel_linf(&two, &one) < 1e-6);

        for _ in 0..3 {
            let s = rng.random_range(0.05..0.6);
            let t = rng.random_range(0.05..0.6);
            for sg in [so2(256, 1.0), so3(200, 0.5)] {
                let f = random_positive(&mut rng, sg.grid());
                let g: Vec<f64> = f.iter().map(|v| v.ln()).collect();
                let two = sg
                    .apply(s, &sg.apply(t, &g, Domain::Log).unwrap(), Domain::Log)
                    .unwrap();
                let one = sg.apply(s + t, &g, Domain::Log).unwrap();
                let two: Vec<f64> = two.iter().map(|v| v.exp()).collect();
                let one: Vec<f64> = one.iter().map(|v| v.exp()).collect();
                assert!(rel_linf(&two, &one) < 1e-6);
            }
        }
    }

    #[test]
    fn mass_positivity_and_maximum_principle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sg in [so2(128, 1.0), so3(120, 0.5)] {
            let grid = sg.grid().clone();
            for _ in 0..20 {
                let f: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.1..1.0)).collect();
                let t = rng.random_range(0.05..1.0);
                let out = sg.apply(t, &f, Domain::Linear).unwrap();
                assert!(out.iter().all(|v| *v > 0.0));
                assert!((grid.integrate(&out) - grid.integrate(&f)).abs() < 1e-8);
                let osc = |v: &[f64]| {
                    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
                };
                assert!(osc(&out) <= osc(&f) + 1e-12);
            }
        }
    }

    #[test]
    fn kernel_is_symmetric() {
        for sg in [so2(64, 1.0), so3(50, 0.5)] {
            let op = sg.operator(0.4).unwrap();
            for i in 0..sg.grid().len() {
                for j in 0..sg.grid().len() {
                    assert_eq!(op.kernel(i, j), op.kernel(j, i));
                }
            }
        }
    }

    #[test]
    fn log_domain_handles_zeros_and_mismatch() {
        let sg = so2(32, 1.0);
        let mut g = vec![f64::NEG_INFINITY; 32];
        g[5] = 0.0;
        let out = sg.apply(0.5, &g, Domain::Log).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        let all_zero = sg.apply(0.5, &[f64::NEG_INFINITY; 32], Domain::Log).unwrap();
        assert!(all_zero.iter().all(|v| *v == f64::NEG_INFINITY));
        assert!(sg.apply(0.5, &[0.0; 31], Domain::Log).is_err());
        assert!(sg.apply(0.5, &[-1.0; 32], Domain::Linear).is_err());
        assert!(sg.apply(0.5, &[f64::NAN; 32], Domain::Log).is_err());
    }

    #[test]
    fn zero_time_is_identity_and_cache_reuses() {
        let sg = so3(40, 0.5);
        let g: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(sg.apply(0.0, &g, Domain::Log).unwrap(), g);
        sg.operator(0.5).unwrap();
        sg.operator(0.5).unwrap();
        assert_eq!(sg.cached_operators(), 2);
        assert!(sg.operator(-0.1).is_err());
    }

    #[test]
    fn kernel_grid_mismatch_rejected() {
        let g = make_grid(GroupId::So3, 16).unwrap();
        let k = HeatKernel::with_defaults(GroupId::So2, 1.0, 16).unwrap();
        assert!(HeatSemigroup::new(g, k).is_err());
    }

    #[test]
    fn so3_short_times_extend_the_series() {
        let k = HeatKernelSo3::new(0.5, 60).unwrap();
        assert_eq!(k.effective_l_max(1.0, 400), 60);
        assert_eq!(k.effective_l_max(0.0, 400), 60);
        let l = k.effective_l_max(0.005, 400);
        assert!(l > 60 && l < 400);
        let lf = l as f64;
        assert!(0.5 * lf * (lf + 1.0) * 0.25 * 0.005 >= TAIL_EXPONENT);
        assert_eq!(k.effective_l_max(1e-9, 400), 400);

        let g = make_grid(GroupId::So3, 400).unwrap();
        let sg = HeatSemigroup::new(g, HeatKernel::So3(k)).unwrap();
        let one = vec![1.0; 400];
        for t in [0.005, 0.01, 0.02] {
            let out = sg.apply(t, &one, Domain::Linear).unwrap();
            assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-8), "t={t}");
        }
    }
}
