//! Grid wavefunctions and a few analytic initial states.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::geometry::CoordinateChart;

/// Complex samples of a wavefunction on a chart's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub values: Vec<Complex64>,
    pub time: f64,
}

/// `sum_i w_i conj(a_i) b_i`.
pub fn inner(weights: &[f64], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| x.conj() * y * *w).sum()
}

pub fn norm(weights: &[f64], a: &[Complex64]) -> f64 {
    weights.iter().zip(a).map(|(w, x)| w * x.norm_sqr()).sum::<f64>().sqrt()
}

impl WaveFunction {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values, time: 0.0 }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(chart: &CoordinateChart, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut x = vec![0.0; chart.dim()];
        let values = (0..chart.len())
            .map(|i| {
                chart.point_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self, weights: &[f64]) -> f64 {
        norm(weights, &self.values)
    }

    pub fn inner(&self, weights: &[f64], other: &WaveFunction) -> Complex64 {
        inner(weights, &self.values, &other.values)
    }

    /// Scales to unit weighted norm; returns the previous norm.
    pub fn normalize(&mut self, weights: &[f64]) -> f64 {
        let n = self.norm(weights);
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
        n
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }
}

/// Gaussian packet `exp(-(x-x0)^2/(4 sigma^2) + i k x)` on a one-dimensional chart.
pub fn gaussian_1d(chart: &CoordinateChart, x0: f64, sigma: f64, k: f64) -> WaveFunction {
    let amp = (2.0 * PI * sigma * sigma).powf(-0.25);
    WaveFunction::from_fn(chart, |x| {
        let d = x[0] - x0;
        Complex64::from_polar(amp * (-d * d / (4.0 * sigma * sigma)).exp(), k * x[0])
    })
}

/// Plane wave `exp(i k x) / sqrt(L)` on a one-dimensional chart.
pub fn plane_wave_1d(chart: &CoordinateChart, k: f64) -> WaveFunction {
    let a = chart.axis(0);
    let amp = 1.0 / (a.upper - a.lower).sqrt();
    WaveFunction::from_fn(chart, |x| Complex64::from_polar(amp, k * x[0]))
}

/// Coherent state of the oscillator `W = m w^2 x^2 / 2` displaced by `amp`,
/// at time `t`, with the conventional phase `-w t / 2`.
pub fn coherent_state(chart: &CoordinateChart, mass: f64, omega: f64, hbar: f64, amp: f64, t: f64) -> WaveFunction {
    let s = mass * omega / hbar;
    let xc = amp * (omega * t).cos();
    let pc = -mass * omega * amp * (omega * t).sin();
    let norm = (s / PI).powf(0.25);
    let phase0 = -0.5 * omega * t;
    WaveFunction::from_fn(chart, |x| {
        let d = x[0] - xc;
        let arg = pc * x[0] / hbar - 0.5 * pc * xc / hbar + phase0;
        Complex64::from_polar(norm * (-0.5 * s * d * d).exp(), arg)
    })
}
