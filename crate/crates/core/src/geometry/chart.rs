//! Tensor-product coordinate grids.
//!
//! Dirichlet axes are sampled at cell centres `lo + (i + 1/2) h`, so a
//! coordinate singularity sitting on a boundary value (`r = 0`,
//! `sin(theta) = 0`) is never a sample point. Periodic axes are sampled at
//! `lo + i h` and identify `hi` with `lo`.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

impl Boundary {
    pub fn keyword(self) -> &'static str {
        match self {
            Boundary::Dirichlet => "dirichlet",
            Boundary::Periodic => "periodic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub boundary: Boundary,
    pub points: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.points as f64
    }

    /// Coordinate of sample `i`.
    pub fn coord(&self, i: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Dirichlet => self.lower + (i as f64 + 0.5) * h,
            Boundary::Periodic => self.lower + i as f64 * h,
        }
    }

    /// Number of cell faces along this axis.
    pub fn faces(&self) -> usize {
        match self.boundary {
            Boundary::Dirichlet => self.points + 1,
            Boundary::Periodic => self.points,
        }
    }

    /// Coordinate of face `k`. Face `k` is the lower face of sample `k`.
    pub fn face_coord(&self, k: usize) -> f64 {
        let h = self.spacing();
        match self.boundary {
            Boundary::Dirichlet => self.lower + k as f64 * h,
            Boundary::Periodic => self.lower + (k as f64 - 0.5) * h,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("a chart needs at least one coordinate")]
    Empty,
    #[error("coordinate `{0}`: lower bound must be below upper bound")]
    EmptyRange(String),
    #[error("coordinate `{0}`: at least 3 grid points are required")]
    TooFewPoints(String),
    #[error("coordinate `{0}`: bounds must be finite")]
    NonFinite(String),
}

/// An N-dimensional tensor-product grid; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateChart {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl CoordinateChart {
    pub fn new(axes: Vec<Axis>) -> Result<Self, ChartError> {
        if axes.is_empty() {
            return Err(ChartError::Empty);
        }
        for a in &axes {
            if !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(ChartError::NonFinite(a.name.clone()));
            }
            if a.lower >= a.upper {
                return Err(ChartError::EmptyRange(a.name.clone()));
            }
            if a.points < 3 {
                return Err(ChartError::TooFewPoints(a.name.clone()));
            }
        }
        let mut strides = vec![1; axes.len()];
        for p in (0..axes.len() - 1).rev() {
            strides[p] = strides[p + 1] * axes[p + 1].points;
        }
        let len = strides[0] * axes[0].points;
        Ok(Self { axes, strides, len })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of sample points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, p: usize) -> &Axis {
        &self.axes[p]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn stride(&self, p: usize) -> usize {
        self.strides[p]
    }

    pub fn spacing(&self, p: usize) -> f64 {
        self.axes[p].spacing()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    /// Product of all grid spacings.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Position of `flat` along axis `p`.
    #[inline]
    pub fn axis_index(&self, flat: usize, p: usize) -> usize {
        (flat / self.strides[p]) % self.axes[p].points
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        (0..self.dim()).map(|p| self.axis_index(flat, p)).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinates of sample `flat`, written into `out`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        for (p, a) in self.axes.iter().enumerate() {
            out[p] = a.coord(self.axis_index(flat, p));
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(flat, &mut x);
        x
    }

    /// Neighbour of `flat` one step along axis `p` in direction `dir`
    /// (`+1` or `-1`); `None` past a Dirichlet edge.
    #[inline]
    pub fn neighbor(&self, flat: usize, p: usize, dir: isize) -> Option<usize> {
        let n = self.axes[p].points;
        let i = self.axis_index(flat, p);
        let s = self.strides[p];
        match (dir > 0, self.axes[p].boundary) {
            (true, _) if i + 1 < n => Some(flat + s),
            (false, _) if i > 0 => Some(flat - s),
            (true, Boundary::Periodic) => Some(flat + s - n * s),
            (false, Boundary::Periodic) => Some(flat + (n - 1) * s),
            _ => None,
        }
    }

    /// True when the sample lies in the outermost layer of some Dirichlet axis.
    pub fn on_edge(&self, flat: usize) -> bool {
        self.axes.iter().enumerate().any(|(p, a)| {
            let i = self.axis_index(flat, p);
            a.boundary == Boundary::Dirichlet && (i == 0 || i + 1 == a.points)
        })
    }

    /// Number of faces in the face grid of axis `p`.
    pub fn face_len(&self, p: usize) -> usize {
        self.len / self.axes[p].points * self.axes[p].faces()
    }

    /// Index of the lower (`upper == false`) or upper face of sample `flat`
    /// along axis `p`, in the face grid of that axis.
    #[inline]
    pub fn face_index(&self, flat: usize, p: usize, upper: bool) -> usize {
        let a = &self.axes[p];
        let i = self.axis_index(flat, p);
        let k = match (upper, a.boundary) {
            (false, _) => i,
            (true, Boundary::Dirichlet) => i + 1,
            (true, Boundary::Periodic) => (i + 1) % a.points,
        };
        let outer = flat / (self.strides[p] * a.points);
        let inner = flat % self.strides[p];
        (outer * a.faces() + k) * self.strides[p] + inner
    }

    /// Coordinates of face `face` of axis `p`.
    pub fn face_point(&self, p: usize, face: usize) -> Vec<f64> {
        let a = &self.axes[p];
        let inner = face % self.strides[p];
        let k = (face / self.strides[p]) % a.faces();
        let outer = face / (self.strides[p] * a.faces());
        let flat = (outer * a.points) * self.strides[p] + inner;
        let mut x = self.point(flat);
        x[p] = a.face_coord(k);
        x
    }

    /// Position of coordinate `name`.
    pub fn position(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(name: &str, lo: f64, hi: f64, b: Boundary, n: usize) -> Axis {
        Axis { name: name.into(), lower: lo, upper: hi, boundary: b, points: n }
    }

    #[test]
    fn rejects_bad_axes() {
        assert_eq!(CoordinateChart::new(vec![]), Err(ChartError::Empty));
        let e = CoordinateChart::new(vec![axis("x", 1.0, 0.0, Boundary::Dirichlet, 8)]);
        assert_eq!(e, Err(ChartError::EmptyRange("x".into())));
        let e = CoordinateChart::new(vec![axis("x", 0.0, 1.0, Boundary::Dirichlet, 2)]);
        assert_eq!(e, Err(ChartError::TooFewPoints("x".into())));
    }

    #[test]
    fn sample_placement() {
        let d = axis("x", 0.0, 1.0, Boundary::Dirichlet, 4);
        assert_eq!(d.coord(0), 0.125);
        assert_eq!(d.face_coord(4), 1.0);
        let p = axis("x", 0.0, 1.0, Boundary::Periodic, 4);
        assert_eq!(p.coord(0), 0.0);
        assert_eq!(p.coord(3), 0.75);
        assert_eq!(p.face_coord(0), -0.125);
    }

    #[test]
    fn neighbours_and_faces() {
        let c = CoordinateChart::new(vec![
            axis("x", 0.0, 1.0, Boundary::Dirichlet, 3),
            axis("y", 0.0, 1.0, Boundary::Periodic, 4),
        ])
        .unwrap();
        assert_eq!(c.len(), 12);
        let f = c.flat_index(&[1, 3]);
        assert_eq!(c.neighbor(f, 1, 1), Some(c.flat_index(&[1, 0])));
        assert_eq!(c.neighbor(c.flat_index(&[0, 2]), 0, -1), None);
        assert_eq!(c.face_len(0), 16);
        assert_eq!(c.face_len(1), 12);
        // the upper face of one cell is the lower face of the next
        for flat in 0..c.len() {
            for p in 0..2 {
                if let Some(nb) = c.neighbor(flat, p, 1) {
                    assert_eq!(c.face_index(flat, p, true), c.face_index(nb, p, false));
                }
            }
        }
        let fp = c.face_point(0, c.face_index(f, 0, true));
        assert!((fp[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(fp[1], 0.75);
    }
}
