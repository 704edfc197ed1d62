//! Magnetic Lorentz gas: a unit-speed charge on Larmor arcs among Poisson
//! distributed hard disks of radius `eps` at intensity `1/eps`, together with
//! the jump process it converges to as `eps → 0`, in which the particle keeps
//! returning to its last scatterer once per cyclotron period.

pub mod boltzmann;
pub mod coupling;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod lorentz;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{MagneticConfig, ParticleState, Vec2};
