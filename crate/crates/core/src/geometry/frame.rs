use nalgebra::DMatrix;

use super::ops::field_derivative;
use super::{CoordinateChart, GeometryError};

/// Coefficients `A_iq` with `e_q = A_iq ê_i` against a local Cartesian
/// frame, and the inverse coefficients, sampled over a chart.
#[derive(Debug, Clone)]
pub struct FrameField {
    dim: usize,
    a: Vec<f64>,
    a_inv: Vec<f64>,
}

impl FrameField {
    /// Samples `A` from `f(x, a)`, which writes `A_iq` row-major (row `i`).
    pub fn from_fn(
        chart: &CoordinateChart,
        f: impl Fn(&[f64], &mut [f64]),
    ) -> Result<Self, GeometryError> {
        let n = chart.dim();
        let n2 = n * n;
        let mut a = vec![0.0; chart.len() * n2];
        let mut a_inv = vec![0.0; chart.len() * n2];
        let mut x = vec![0.0; n];
        for i in 0..chart.len() {
            chart.point_into(i, &mut x);
            let block = &mut a[i * n2..(i + 1) * n2];
            f(&x, block);
            let m = DMatrix::from_row_slice(n, n, block);
            let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            if m.determinant().abs() <= 1e-12 * scale.powi(n as i32) {
                return Err(GeometryError::SingularFrame { point: x.clone() });
            }
            let inv = m.try_inverse().ok_or_else(|| GeometryError::SingularFrame { point: x.clone() })?;
            for r in 0..n {
                for c in 0..n {
                    a_inv[i * n2 + r * n + c] = inv[(r, c)];
                }
            }
        }
        Ok(Self { dim: n, a, a_inv })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `A_iq` at sample `k`.
    pub fn a(&self, k: usize, i: usize, q: usize) -> f64 {
        self.a[k * self.dim * self.dim + i * self.dim + q]
    }

    /// `A^-1_qj` at sample `k`.
    pub fn a_inv(&self, k: usize, q: usize, j: usize) -> f64 {
        self.a_inv[k * self.dim * self.dim + q * self.dim + j]
    }

    /// `A_ip A_iq` at sample `k`, row-major.
    pub fn induced_metric(&self, k: usize) -> Vec<f64> {
        let n = self.dim;
        let mut g = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                g[p * n + q] = (0..n).map(|i| self.a(k, i, p) * self.a(k, i, q)).sum();
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct FrameConnections {
    dim: usize,
    gamma: Vec<f64>,
    contraction: Vec<f64>,
}

impl FrameConnections {
    /// `Gamma^q_pr` at sample `k`.
    pub fn gamma(&self, k: usize, q: usize, p: usize, r: usize) -> f64 {
        let n = self.dim;
        self.gamma[((k * n + q) * n + p) * n + r]
    }

    /// `e^p . d_p e^q` at sample `k`.
    pub fn contraction(&self, k: usize, q: usize) -> f64 {
        self.contraction[k * self.dim + q]
    }
}

/// `Gamma^q_pr = (d_p A^-1_qj) A_jr` and `e^p . d_p e^q = A^-1_pi d_p A^-1_qi`.
pub fn frame_connections(frame: &FrameField, chart: &CoordinateChart) -> FrameConnections {
    let n = frame.dim;
    let len = chart.len();
    // d_inv[p][q*n+j] = d_p A^-1_qj
    let d_inv: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|p| {
            (0..n * n)
                .map(|qj| {
                    let comp: Vec<f64> = (0..len).map(|k| frame.a_inv[k * n * n + qj]).collect();
                    field_derivative(&comp, chart, p)
                })
                .collect()
        })
        .collect();
    let mut gamma = vec![0.0; len * n * n * n];
    let mut contraction = vec![0.0; len * n];
    for k in 0..len {
        for q in 0..n {
            for p in 0..n {
                for r in 0..n {
                    gamma[((k * n + q) * n + p) * n + r] =
                        (0..n).map(|j| d_inv[p][q * n + j][k] * frame.a(k, j, r)).sum();
                }
            }
            contraction[k * n + q] = (0..n)
                .flat_map(|p| (0..n).map(move |i| (p, i)))
                .map(|(p, i)| frame.a_inv(k, p, i) * d_inv[p][q * n + i][k])
                .sum();
        }
    }
    FrameConnections { dim: n, gamma, contraction }
}
