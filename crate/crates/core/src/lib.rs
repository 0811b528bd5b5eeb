//! Transient nonlinear electroquasistatic finite elements with adjoint
//! parameter sensitivities.
//!
//! The potential `φ` on a triangular mesh obeys
//! `∇·(σ(E)∇φ) + ∂/∂t ∇·(ε∇φ) = 0` with Dirichlet electrodes. The forward
//! problem is integrated with implicit Euler and Newton; the adjoint of that
//! discrete scheme yields `dG/dp` for every quantity of interest `G` at the
//! cost of one backward linear sweep per quantity.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The
//! `*64`/`*32` aliases below fix the precision.

pub mod adjoint;
pub mod assembly;
pub mod error;
pub mod excitation;
pub mod forward;
pub mod materials;
pub mod mesh;
pub mod oracle;
pub mod qoi;
pub mod scalar;
pub mod scenarios;
pub mod sensitivity;
pub mod sparse;
pub mod timegrid;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Mesh32 = mesh::Mesh<f32>;
pub type MaterialMap64 = materials::MaterialMap<f64>;
pub type MaterialMap32 = materials::MaterialMap<f32>;
pub type TimeGrid64 = timegrid::TimeGrid<f64>;
pub type TimeGrid32 = timegrid::TimeGrid<f32>;
pub type TransientSolution64 = forward::TransientSolution<f64>;
pub type TransientSolution32 = forward::TransientSolution<f32>;
pub type Scenario64 = scenarios::Scenario<f64>;
pub type Scenario32 = scenarios::Scenario<f32>;
pub type SensitivityResult64 = sensitivity::SensitivityResult<f64>;
pub type SensitivityResult32 = sensitivity::SensitivityResult<f32>;
