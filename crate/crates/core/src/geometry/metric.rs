use super::{CoordinateChart, GeometryError};

/// Anything that can report the covariant metric `g_pq` at a point.
pub trait MetricSource {
    fn dim(&self) -> usize;

    /// Writes the row-major `N x N` covariant metric at `x` into `out`.
    fn metric_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), GeometryError>;
}

/// A metric given by a closure.
pub struct FnMetric<F> {
    dim: usize,
    f: F,
}

impl<F> FnMetric<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> MetricSource for FnMetric<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn metric_at(&self, x: &[f64], out: &mut [f64]) -> Result<(), GeometryError> {
        (self.f)(x, out);
        Ok(())
    }
}

/// The metric sampled over a chart.
#[derive(Debug, Clone)]
pub struct MetricField {
    dim: usize,
    g_lower: Vec<f64>,
    g_upper: Vec<f64>,
    sqrt_det: Vec<f64>,
    /// Per axis `p`: `sqrt|g| g^pp` on the face grid of `p`.
    face_coeff: Vec<Vec<f64>>,
}

impl MetricField {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sqrt_det.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqrt_det.is_empty()
    }

    /// Covariant components at sample `i`, row-major.
    #[inline]
    pub fn lower(&self, i: usize) -> &[f64] {
        let n2 = self.dim * self.dim;
        &self.g_lower[i * n2..(i + 1) * n2]
    }

    /// Contravariant components at sample `i`, row-major.
    #[inline]
    pub fn upper(&self, i: usize) -> &[f64] {
        let n2 = self.dim * self.dim;
        &self.g_upper[i * n2..(i + 1) * n2]
    }

    #[inline]
    pub fn sqrt_det(&self, i: usize) -> f64 {
        self.sqrt_det[i]
    }

    pub fn sqrt_det_field(&self) -> &[f64] {
        &self.sqrt_det
    }

    /// `sqrt|g| g^pp` on the faces normal to axis `p`.
    pub fn face_coefficients(&self, p: usize) -> &[f64] {
        &self.face_coeff[p]
    }

    /// Component `g_pq` as a scalar field.
    pub fn lower_component(&self, p: usize, q: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.lower(i)[p * self.dim + q]).collect()
    }

    /// Raises a covariant vector at sample `i`.
    #[inline]
    pub fn raise(&self, i: usize, covariant: &[f64], out: &mut [f64]) {
        let gu = self.upper(i);
        let n = self.dim;
        for p in 0..n {
            out[p] = (0..n).map(|q| gu[p * n + q] * covariant[q]).sum();
        }
    }

    /// Largest `|g^pr g_rq - delta_pq|` over all samples.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            let (gl, gu) = (self.lower(i), self.upper(i));
            for p in 0..n {
                for q in 0..n {
                    let s: f64 = (0..n).map(|r| gu[p * n + r] * gl[r * n + q]).sum();
                    let target = if p == q { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }
}

/// Cholesky-based inverse of a small symmetric positive-definite matrix.
/// Returns `sqrt(det)` on success.
pub(crate) fn spd_inverse(a: &[f64], n: usize, inv: &mut [f64]) -> Option<f64> {
    let mut l = vec![0.0; n * n];
    let mut log_scale = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
                log_scale += 0.5 * a[i * n + i].ln();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let sqrt_det: f64 = (0..n).map(|i| l[i * n + i]).product();
    // reject near-singular matrices relative to the diagonal scale
    if sqrt_det.ln() - log_scale < 0.5 * (1e-14f64).ln() {
        return None;
    }
    // inv = L^-T L^-1, column by column
    let mut col = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[i * n + k] * col[k];
            }
            col[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[k * n + i] * inv[k * n + c];
            }
            inv[i * n + c] = s / l[i * n + i];
        }
    }
    Some(sqrt_det)
}

fn check_symmetric(g: &[f64], n: usize, x: &[f64]) -> Result<(), GeometryError> {
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for p in 0..n {
        for q in p + 1..n {
            if (g[p * n + q] - g[q * n + p]).abs() > 1e-12 * scale {
                return Err(GeometryError::NonSymmetric { point: x.to_vec(), p, q });
            }
        }
    }
    Ok(())
}

/// Samples the metric, its inverse and `sqrt|g|` over the chart, plus the
/// normal flux coefficient `sqrt|g| g^pp` on every cell face. Faces where
/// the metric degenerates (polar axes, the origin) get a zero coefficient.
pub fn build_metric<S: MetricSource + ?Sized>(
    source: &S,
    chart: &CoordinateChart,
) -> Result<MetricField, GeometryError> {
    let n = chart.dim();
    assert_eq!(source.dim(), n, "metric dimension does not match the chart");
    let n2 = n * n;
    let len = chart.len();
    let mut g_lower = vec![0.0; len * n2];
    let mut g_upper = vec![0.0; len * n2];
    let mut sqrt_det = vec![0.0; len];
    let mut x = vec![0.0; n];
    for i in 0..len {
        chart.point_into(i, &mut x);
        let gl = &mut g_lower[i * n2..(i + 1) * n2];
        source.metric_at(&x, gl)?;
        if gl.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::SingularMetric { point: x.clone() });
        }
        check_symmetric(gl, n, &x)?;
        match spd_inverse(gl, n, &mut g_upper[i * n2..(i + 1) * n2]) {
            Some(d) => sqrt_det[i] = d,
            None => return Err(GeometryError::SingularMetric { point: x.clone() }),
        }
    }

    let mut face_coeff = Vec::with_capacity(n);
    let mut g = vec![0.0; n2];
    let mut inv = vec![0.0; n2];
    for p in 0..n {
        let mut coeff = vec![0.0; chart.face_len(p)];
        for (f, c) in coeff.iter_mut().enumerate() {
            let xf = chart.face_point(p, f);
            source.metric_at(&xf, &mut g)?;
            if g.iter().all(|v| v.is_finite()) {
                if let Some(d) = spd_inverse(&g, n, &mut inv) {
                    *c = d * inv[p * n + p];
                }
            }
        }
        face_coeff.push(coeff);
    }

    Ok(MetricField { dim: n, g_lower, g_upper, sqrt_det, face_coeff })
}

/// Quadrature weights `sqrt|g| prod(dx^p)` (midpoint rule on the sample grid).
pub fn volume_weights(metric: &MetricField, chart: &CoordinateChart) -> Vec<f64> {
    let dv = chart.cell_volume();
    metric.sqrt_det_field().iter().map(|s| s * dv).collect()
}
