//! Radial grids, warped-product metrics, curvature and quadrature.

mod chart;
mod metric;
pub mod oracle;
mod profile;

pub use chart::{build_chart, ChartParams, InnerMode, RadialChart, Spacing};
pub use metric::{
    decay_rate_estimate, integrate_ball, same_chart, sphere_area, DecayFit, FiberSpec, RadialField,
    ReferenceKind, WarpedMetric,
};
pub use profile::{Parity, Profile};
