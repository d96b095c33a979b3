//! Numerical laboratory for holomorphic dynamics on the Riemann sphere.
//!
//! The crate computes Green functions and Green-measure densities of rational
//! maps, samples the measure of maximal entropy by backward iteration,
//! estimates Lyapunov exponents and measure dimension, builds Lattès maps from
//! elliptic-curve duplication, and runs Monte Carlo linearization diagnostics
//! that separate Lattès maps from generic ones.

pub mod error;
pub mod estimators;
pub mod families;
pub mod green;
pub mod lindiag;
pub mod proj_maps;
pub mod sampler;
pub mod stats;

mod poly;
mod roots;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use proj_maps::{make_rational_map, Chart, OrbitRecord, ProjPoint, RationalMap};
