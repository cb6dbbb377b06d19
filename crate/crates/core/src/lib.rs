//! Non-integrability certificates for planar Hamiltonians with homogeneous
//! potentials of real degree, and the McGehee blow-up of their collision
//! dynamics.

pub mod certifier;
pub mod critical;
pub mod dsl;
pub mod jet;
pub mod mcgehee;
pub mod morales;
pub mod ode;
pub mod report;
pub mod sweep;
pub mod validate;
