//! Benchmark truth discretizations: the 3x3 conductivity-block diffusion
//! problem on the unit square and the 1-D Helmholtz impedance problem.

pub mod helmholtz;
pub mod thermal;

pub use helmholtz::{build_helmholtz_1d, HelmholtzConfig};
pub use thermal::{build_thermal_block, ThermalBlockConfig};
