use num_complex::Complex64;

use super::{Boundary, CoordinateChart, MetricField};
use crate::sparse::CsrMatrix;

/// `d f / d x^p` for a smooth geometry field: central differences inside,
/// one-sided second-order stencils at Dirichlet edges, wrap-around on
/// periodic axes.
pub fn field_derivative(f: &[f64], chart: &CoordinateChart, p: usize) -> Vec<f64> {
    let a = chart.axis(p);
    let h = a.spacing();
    let n = a.points;
    let s = chart.stride(p);
    let mut out = vec![0.0; f.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = chart.axis_index(flat, p);
        *o = match a.boundary {
            Boundary::Periodic => {
                let up = if i + 1 < n { flat + s } else { flat + s - n * s };
                let dn = if i > 0 { flat - s } else { flat + (n - 1) * s };
                (f[up] - f[dn]) / (2.0 * h)
            }
            Boundary::Dirichlet if i == 0 => {
                (-3.0 * f[flat] + 4.0 * f[flat + s] - f[flat + 2 * s]) / (2.0 * h)
            }
            Boundary::Dirichlet if i + 1 == n => {
                (3.0 * f[flat] - 4.0 * f[flat - s] + f[flat - 2 * s]) / (2.0 * h)
            }
            Boundary::Dirichlet => (f[flat + s] - f[flat - s]) / (2.0 * h),
        };
    }
    out
}

/// Central derivative of a wavefunction along axis `p`, with the field
/// taken as zero beyond Dirichlet edges. The resulting operator is
/// antisymmetric.
pub fn wave_derivative(psi: &[Complex64], chart: &CoordinateChart, p: usize) -> Vec<Complex64> {
    let inv = 0.5 / chart.spacing(p);
    let zero = Complex64::new(0.0, 0.0);
    (0..psi.len())
        .map(|flat| {
            let up = chart.neighbor(flat, p, 1).map_or(zero, |k| psi[k]);
            let dn = chart.neighbor(flat, p, -1).map_or(zero, |k| psi[k]);
            (up - dn) * inv
        })
        .collect()
}

/// `(1/sqrt|g|) d_q (sqrt|g| A^q)` for a contravariant field given per component.
pub fn divergence(field: &[Vec<f64>], metric: &MetricField, chart: &CoordinateChart) -> Vec<f64> {
    let sg = metric.sqrt_det_field();
    let mut out = vec![0.0; chart.len()];
    for (q, comp) in field.iter().enumerate() {
        let flux: Vec<f64> = comp.iter().zip(sg).map(|(a, s)| a * s).collect();
        for (o, d) in out.iter_mut().zip(field_derivative(&flux, chart, q)) {
            *o += d;
        }
    }
    for (o, s) in out.iter_mut().zip(sg) {
        *o /= s;
    }
    out
}

/// Laplace–Beltrami operator as a sparse matrix acting on grid fields that
/// vanish beyond Dirichlet edges.
///
/// Diagonal metric parts use the compact face stencil with coefficients
/// `sqrt|g| g^pp` evaluated on cell faces; off-diagonal parts use
/// `D_p (sqrt|g| g^pq D_q)` with centred differences. Both pieces are
/// symmetric under the `sqrt|g|`-weighted inner product.
pub fn laplacian_matrix(metric: &MetricField, chart: &CoordinateChart) -> CsrMatrix<f64> {
    let n = chart.dim();
    let len = chart.len();
    let sg = metric.sqrt_det_field();
    let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(len * (2 * n + 1));

    for p in 0..n {
        let h2 = chart.spacing(p).powi(2);
        let faces = metric.face_coefficients(p);
        for i in 0..len {
            let c_hi = faces[chart.face_index(i, p, true)];
            let c_lo = faces[chart.face_index(i, p, false)];
            let scale = 1.0 / (sg[i] * h2);
            let mut diag = 0.0;
            match chart.neighbor(i, p, 1) {
                Some(j) => {
                    trip.push((i, j, c_hi * scale));
                    diag -= c_hi * scale;
                }
                None => diag -= 2.0 * c_hi * scale,
            }
            match chart.neighbor(i, p, -1) {
                Some(j) => {
                    trip.push((i, j, c_lo * scale));
                    diag -= c_lo * scale;
                }
                None => diag -= 2.0 * c_lo * scale,
            }
            trip.push((i, i, diag));
        }
    }

    // cross terms (1/sqrt g) D_p (k^pq D_q), k = sqrt g g^pq
    for p in 0..n {
        for q in 0..n {
            if p == q {
                continue;
            }
            let k: Vec<f64> = (0..len).map(|i| sg[i] * metric.upper(i)[p * n + q]).collect();
            if k.iter().all(|v| *v == 0.0) {
                continue;
            }
            let cp = 0.5 / chart.spacing(p);
            let cq = 0.5 / chart.spacing(q);
            for i in 0..len {
                let scale = 1.0 / sg[i];
                for (dp, sp) in [(1isize, 1.0), (-1, -1.0)] {
                    let Some(m) = chart.neighbor(i, p, dp) else { continue };
                    for (dq, sq) in [(1isize, 1.0), (-1, -1.0)] {
                        let Some(j) = chart.neighbor(m, q, dq) else { continue };
                        trip.push((i, j, scale * sp * cp * k[m] * sq * cq));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(len, len, trip)
}

/// Applies the Laplace–Beltrami operator to `phi`; see [`laplacian_matrix`].
pub fn laplace_beltrami(phi: &[f64], metric: &MetricField, chart: &CoordinateChart) -> Vec<f64> {
    laplacian_matrix(metric, chart).mul_vec(phi)
}
