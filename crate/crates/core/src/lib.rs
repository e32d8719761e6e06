//! Quantized tensor-train (QTT) finite element assembly and solution of the
//! 2D Poisson problem with homogeneous Dirichlet data on domains split into
//! quadrangles.
//!
//! The pipeline mirrors the assembly algorithm bottom-up:
//!
//! * [`tt`]: TT/QTT vectors and matrices, rounding, cross interpolation.
//! * [`zorder`]: z-order (Morton) indexing, the z-kron product and meshgrids.
//! * [`geometry`]: bilinear quadrangle maps and their Jacobian fields.
//! * [`assembly`]: per-subdomain stiffness matrices and load vectors.
//! * [`coupling`]: interface matrices, boundary masks and the global system.
//! * [`solve`]: dense and TT solvers, energy and Richardson extrapolation.
//! * [`experiment`]: configuration files and the parameter sweep driver.

pub mod assembly;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod solve;
pub mod tt;
pub mod zorder;

pub use error::{Error, Result};
