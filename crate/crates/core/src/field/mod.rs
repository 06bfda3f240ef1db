//! Densities on `[-1,1]²`, evaluation of the extension operator
//! `Ef(x) = ∫ e^{i(x₁ξ + x₂η + x₃Φ(ξ,η))} f(ξ,η) dξ dη` by slice FFTs, and
//! spatial norms.

pub mod density;
pub mod fft;
pub mod io;
pub mod spatial;
pub mod torus;

pub use density::{AxisPartition, FreqDensity, RestrictMode, Surface, Thickness};
pub use spatial::{eval_direct, extend, extend_block, BlockGrid, lp_integral, lp_norm, Region, SliceGrid, SpatialField, ZNodes};
pub use torus::PeriodicBox;
