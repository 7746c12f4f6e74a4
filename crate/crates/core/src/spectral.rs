//! FFT helpers on the uniform circle grid.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse FFT pair for a fixed length.
#[derive(Clone)]
pub struct CircleFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CircleFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircleFft").field("n", &self.n).finish()
    }
}

impl CircleFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumber of FFT bin `b`, with the Nyquist bin mapped to `+n/2`.
    pub fn wavenumber(&self, b: usize) -> i64 {
        if b <= self.n / 2 {
            b as i64
        } else {
            b as i64 - self.n as i64
        }
    }

    /// Unnormalized forward transform of a real signal.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/n` factor; returns the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }

    /// Multiplies the spectrum bin-wise by a real multiplier.
    pub fn filter(&self, f: &[f64], multipliers: &[f64]) -> Vec<f64> {
        let mut spec = self.forward(f);
        spec.iter_mut().zip(multipliers).for_each(|(c, m)| *c *= *m);
        self.inverse_real(spec)
    }

    /// Spectral derivative `d^order f / dθ^order` of a periodic grid function.
    ///
    /// For odd orders the Nyquist bin is zeroed so the result stays real.
    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let mut spec = self.forward(f);
        let nyquist = self.n.is_multiple_of(2);
        for (b, c) in spec.iter_mut().enumerate() {
            let k = self.wavenumber(b) as f64;
            if nyquist && b == self.n / 2 && order % 2 == 1 {
                *c = Complex::new(0.0, 0.0);
                continue;
            }
            *c *= Complex::new(0.0, k).powu(order);
        }
        self.inverse_real(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn derivative_of_trig_polynomial() {
        let n = 64;
        let fft = CircleFft::new(n);
        let th: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let f: Vec<f64> = th.iter().map(|t| (3.0 * t).sin() + 0.5 * (5.0 * t).cos()).collect();
        let d1 = fft.derivative(&f, 1);
        let d2 = fft.derivative(&f, 2);
        for (i, t) in th.iter().enumerate() {
            let e1 = 3.0 * (3.0 * t).cos() - 2.5 * (5.0 * t).sin();
            let e2 = -9.0 * (3.0 * t).sin() - 12.5 * (5.0 * t).cos();
            assert!((d1[i] - e1).abs() < 1e-12);
            assert!((d2[i] - e2).abs() < 1e-11);
        }
    }

    #[test]
    fn unit_filter_is_identity() {
        let fft = CircleFft::new(16);
        let f: Vec<f64> = (0..16).map(|i| (i as f64).sqrt()).collect();
        let g = fft.filter(&f, &[1.0; 16]);
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
