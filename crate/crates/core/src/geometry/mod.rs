//! Metric-space objects on tensor-product grids.

mod chart;
mod christoffel;
mod frame;
mod metric;
mod ops;

use std::sync::OnceLock;

use thiserror::Error;

pub use chart::{Axis, Boundary, ChartError, CoordinateChart};
pub use christoffel::{check_identity_a13, christoffel, identity_a13_field, ChristoffelData};
pub use frame::{frame_connections, FrameConnections, FrameField};
pub(crate) use metric::spd_inverse;
pub use metric::{build_metric, volume_weights, FnMetric, MetricField, MetricSource};
pub use ops::{
    divergence, field_derivative, laplace_beltrami, laplacian_matrix, wave_derivative,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("metric is singular or not positive definite at {point:?}")]
    SingularMetric { point: Vec<f64> },
    #[error("metric is not symmetric in ({p},{q}) at {point:?}")]
    NonSymmetric { point: Vec<f64>, p: usize, q: usize },
    #[error("frame is singular at {point:?}")]
    SingularFrame { point: Vec<f64> },
    #[error("{0}")]
    Evaluation(String),
}

/// Everything the operators need to know about the geometry of a chart.
#[derive(Debug)]
pub struct GeometryData {
    chart: CoordinateChart,
    metric: MetricField,
    weights: Vec<f64>,
    christoffel: OnceLock<ChristoffelData>,
}

impl GeometryData {
    pub fn new<S: MetricSource + ?Sized>(
        source: &S,
        chart: CoordinateChart,
    ) -> Result<Self, GeometryError> {
        let metric = build_metric(source, &chart)?;
        let weights = volume_weights(&metric, &chart);
        Ok(Self { chart, metric, weights, christoffel: OnceLock::new() })
    }

    pub fn chart(&self) -> &CoordinateChart {
        &self.chart
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Christoffel symbols, computed on first use.
    pub fn christoffel(&self) -> &ChristoffelData {
        self.christoffel.get_or_init(|| christoffel(&self.metric, &self.chart))
    }
}

impl Clone for GeometryData {
    fn clone(&self) -> Self {
        Self {
            chart: self.chart.clone(),
            metric: self.metric.clone(),
            weights: self.weights.clone(),
            christoffel: OnceLock::new(),
        }
    }
}
