//! Nonlocal isoperimetric energies `P(F) + gamma NL_alpha(F)` on hyperbolic space.
//!
//! The geometry layer is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! quadrature, optimizer and audit layers work in `f64`.

pub mod auditor;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod kernel;
pub mod optimizer;
pub mod quadrature;
pub mod scalar;

pub use error::{Error, Result};
pub use geometry::{GeodesicBall, HPoint, IsoXi, Params};
pub use graph::RadialGraph;
pub use kernel::QuadratureSpec;
pub use scalar::Scalar;

pub type ParamsF64 = Params<f64>;
pub type ParamsF32 = Params<f32>;
pub type HPointF64 = HPoint<f64>;
pub type HPointF32 = HPoint<f32>;
pub type GeodesicBallF64 = GeodesicBall<f64>;
pub type GeodesicBallF32 = GeodesicBall<f32>;
pub type IsoXiF64 = IsoXi<f64>;
pub type IsoXiF32 = IsoXi<f32>;
