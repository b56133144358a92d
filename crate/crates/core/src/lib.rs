//! Simulation and estimation of two-qubit negativity at the quantum
//! Cramér–Rao limit.
//!
//! The crate generates coincidence counts for polarization-entangled photon
//! pairs, estimates their negativity and mixing from correlation
//! measurements, and checks the estimates against the quantum Fisher
//! information of the state family.
//!
//! * [`linalg`]: 4×4 complex algebra, partial transpose, Jacobi eigen-solver.
//! * [`states`]: the coherent-mixture and Werner families, SLD and QFI.
//! * [`measurement`]: product POVM, visibility, classical Fisher information.
//! * [`simulator`]: seeded Poissonian coincidence counts.
//! * [`estimation`]: negativity/mixing estimators and their statistics.
//! * [`tomography`]: linear-inversion reconstruction as a model cross-check.

pub mod error;
pub mod estimation;
pub mod format;
pub mod linalg;
pub mod measurement;
pub mod rng;
pub mod simulator;
pub mod states;
pub mod tomography;

pub use error::{Error, Result};
