use super::ops::field_derivative;
use super::{CoordinateChart, MetricField};

/// Christoffel symbols of both kinds, stored per sample as `N^3` blocks.
#[derive(Debug, Clone)]
pub struct ChristoffelData {
    dim: usize,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl ChristoffelData {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn at(&self, i: usize, a: usize, p: usize, q: usize) -> usize {
        let n = self.dim;
        ((i * n + a) * n + p) * n + q
    }

    /// `[s,pq]` at sample `i`.
    pub fn first_kind(&self, i: usize, s: usize, p: usize, q: usize) -> f64 {
        self.first[self.at(i, s, p, q)]
    }

    /// `Gamma^r_pq` at sample `i`.
    pub fn second_kind(&self, i: usize, r: usize, p: usize, q: usize) -> f64 {
        self.second[self.at(i, r, p, q)]
    }
}

/// `[s,pq] = (d_p g_qs + d_q g_ps - d_s g_pq) / 2` and `Gamma^r_pq = g^rs [s,pq]`.
pub fn christoffel(metric: &MetricField, chart: &CoordinateChart) -> ChristoffelData {
    let n = chart.dim();
    let len = chart.len();
    // dg[a][p*n+q] = d_a g_pq
    let mut dg = vec![vec![Vec::new(); n * n]; n];
    for p in 0..n {
        for q in p..n {
            let comp = metric.lower_component(p, q);
            for (a, slot) in dg.iter_mut().enumerate() {
                let d = field_derivative(&comp, chart, a);
                slot[q * n + p] = d.clone();
                slot[p * n + q] = d;
            }
        }
    }
    let n3 = n * n * n;
    let mut first = vec![0.0; len * n3];
    let mut second = vec![0.0; len * n3];
    for i in 0..len {
        let base = i * n3;
        for s in 0..n {
            for p in 0..n {
                for q in p..n {
                    let v = 0.5 * (dg[p][q * n + s][i] + dg[q][p * n + s][i] - dg[s][p * n + q][i]);
                    first[base + (s * n + p) * n + q] = v;
                    first[base + (s * n + q) * n + p] = v;
                }
            }
        }
        let gu = metric.upper(i);
        for r in 0..n {
            for p in 0..n {
                for q in 0..n {
                    second[base + (r * n + p) * n + q] =
                        (0..n).map(|s| gu[r * n + s] * first[base + (s * n + p) * n + q]).sum();
                }
            }
        }
    }
    ChristoffelData { dim: n, first, second }
}

/// `max_p |Gamma^q_pq - d_p ln sqrt|g||` at every sample.
pub fn identity_a13_field(metric: &MetricField, chr: &ChristoffelData, chart: &CoordinateChart) -> Vec<f64> {
    let n = chart.dim();
    let ln_sg: Vec<f64> = metric.sqrt_det_field().iter().map(|s| s.ln()).collect();
    let mut out = vec![0.0f64; chart.len()];
    for p in 0..n {
        let d = field_derivative(&ln_sg, chart, p);
        for (i, dv) in d.iter().enumerate() {
            let trace: f64 = (0..n).map(|q| chr.second_kind(i, q, p, q)).sum();
            out[i] = out[i].max((trace - dv).abs());
        }
    }
    out
}

/// Largest [`identity_a13_field`] value over samples away from Dirichlet edges.
pub fn check_identity_a13(metric: &MetricField, chr: &ChristoffelData, chart: &CoordinateChart) -> f64 {
    identity_a13_field(metric, chr, chart)
        .iter()
        .enumerate()
        .filter(|(i, _)| !chart.on_edge(*i))
        .fold(0.0, |m, (_, v)| m.max(*v))
}
