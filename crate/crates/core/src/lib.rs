//! Numerical laboratory for the nonlocal Allen-Cahn energy
//!
//! ```text
//! E(u; Omega) = K(u; Omega) + \int_Omega W(u),
//! K(u; Omega) = 1/2 \int_Omega \int_Omega |u(x)-u(y)|^2 K + \int_Omega \int_{C Omega} |u(x)-u(y)|^2 K,
//! ```
//!
//! with the raw kernel `K = |x - y|^{-n-2s}`, on uniform grids of piecewise
//! constant functions.

pub mod barrier;
pub mod density;
pub mod error;
pub mod exterior;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod levelset;
pub mod minimize;
pub mod potential;
pub mod quadrature;
pub mod recursion;
pub mod reduce;
pub mod sobolev;

pub use error::{Error, Result};
pub use exterior::ExteriorData;
pub use geometry::{GridGeometry, ModelParams, QuadratureSettings, Region, Thresholds};
pub use grid::GridFunction;
pub use kernel::{EnergyBreakdown, NonlocalOperator};
pub use potential::Potential;
