//! Numerical laboratory for Fourier extension from the hyperbolic
//! paraboloid `H = {(ξ, η, ξη)}`: slice-FFT evaluation of the extension
//! operator, wave packets, decoupling-ratio estimators, the broad norm,
//! incidence geometry of shaded tubes and restriction ratios.

pub mod error;
pub mod broadnarrow;
pub mod decouple;
pub mod field;
pub mod geom;
pub mod incidence;
pub mod restriction;
pub mod runner;
pub mod util;
pub mod wavepacket;

pub use error::{Error, Result};
pub use num_complex::Complex64;
