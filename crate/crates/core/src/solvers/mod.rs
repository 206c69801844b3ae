//! Eigenpairs and time evolution of discretized Hamiltonians.
//!
//! Both work on the symmetrically scaled matrix `B = W^{1/2} H W^{-1/2}`,
//! which is Hermitian in the ordinary inner product whenever `H` is
//! Hermitian in the weighted one.

mod eigen;
mod evolve;
pub mod profile;

pub use eigen::{lowest_eigenpairs, lowest_eigenpairs_with, EigenError, EigenOptions, EigenResult, Sector};
pub use evolve::{
    evolve, evolve_with, EvolveError, EvolveOptions, HamiltonianProvider, SpecProvider, Trajectory,
};

use num_complex::Complex64;

use crate::operator::DiscretizedHamiltonian;
use crate::sparse::CsrMatrix;

/// `W^{1/2} H W^{-1/2}` and the largest `|B - B^H|` relative to `max |B|`.
pub(crate) fn scaled_operator(h: &DiscretizedHamiltonian) -> (CsrMatrix<Complex64>, Vec<f64>, f64) {
    let sw: Vec<f64> = h.weights().iter().map(|w| w.sqrt()).collect();
    let inv: Vec<f64> = sw.iter().map(|s| 1.0 / s).collect();
    let b = h.matrix().scale_rows_cols(&sw, &inv);
    let scale = b.values().iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let defect = b.max_abs_diff(&b.conj_transpose());
    (b, sw, if scale > 0.0 { defect / scale } else { 0.0 })
}

/// Exact Hermitian part `(B + B^H) / 2`.
pub(crate) fn hermitian_part(b: &CsrMatrix<Complex64>) -> CsrMatrix<Complex64> {
    b.add(&b.conj_transpose()).map(|v| v * 0.5)
}
