//! Lattice crystal-surface relaxation: kinetic Monte Carlo for the
//! bond-counting surface model, surface tensions of the discrete and
//! continuous height measures, and the fourth-order PDEs they feed.

pub mod error;
pub mod exec;
pub mod field;
pub mod harness;
pub mod kmc;
pub mod pde;
pub mod potential;
pub mod rng;
pub mod scaling;
pub mod surface;
pub mod tension;

pub use error::{Error, Result};
pub use exec::Execution;
pub use field::ContinuumField;
pub use kmc::ModelParams;
pub use potential::Potential;
pub use rng::RandomSource;
pub use surface::{HeightField, LatticeShape, SiteMove};
