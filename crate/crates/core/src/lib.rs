//! Electromagnetic formation flight toolkit.
//!
//! Exact near-field interaction between triaxial air-core coils (double loop
//! Biot-Savart quadrature), the dipole far-field approximation, a compact MLP
//! surrogate of the loop-integral kernels, decentralized AC current allocation
//! and a two-satellite docking simulation with Clohessy-Wiltshire relative
//! motion and reaction-wheel attitude dynamics.

pub mod allocation;
pub mod control;
pub mod dynamics;
mod error;
pub mod field_exact;
pub mod field_farfield;
pub mod frames;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};

/// Three-component column vector.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Vacuum permeability, legacy exact value.
pub const MU_0: f64 = 4.0e-7 * std::f64::consts::PI;
/// `MU_0 / (4 pi)`.
pub const MU0_OVER_4PI: f64 = 1.0e-7;
