//! Per-surface interpolation benchmarks that use no historical data.

mod delaunay;
mod gp;

pub use delaunay::{
    convex_hull, inside_hull, linear_interpolate, triangulate, InterpolationResult, Triangulation,
};
pub use gp::{gp_fit, gp_predict, Extrapolation, GpHyperparams};
