//! Time-domain electromagnetic scattering with generalized impedance
//! boundary conditions: Raviart–Thomas boundary elements in space and
//! Radau IIA convolution quadrature in time.

pub mod assembly;
pub mod calderon;
pub mod cq;
pub mod geom;
pub mod mesh;
pub mod kernel;
pub mod quadrature;
pub mod scattering;
pub mod trace_space;

pub use num_complex::Complex64 as C64;
