//! Solver and estimate checker for the nonconvex mean field games system
//!
//! ```text
//! u_t + H(Du) = Δu + ρ*(ρ*m)        in 𝕋ᵈ × (0,T)
//! −m_t − div(DH(Du) m) = Δm         in 𝕋ᵈ × (0,T)
//! u(·,0) = u₀,  m(·,T) = m_T
//! ```
//!
//! on the unit torus, d ∈ {1, 2}. The fixed-point map `m ↦ FP(HJB(m))` is
//! iterated with damping ([`fixed_point`]), and the a priori and energy
//! estimates that govern existence and uniqueness are evaluated on discrete
//! solutions ([`diagnostics`]).

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod fixed_point;
pub mod fp;
pub mod grid;
pub mod hamiltonian;
pub mod hjb;
pub mod presets;
pub mod problem;

pub use error::{MfgError, Result};
pub use grid::{Field, SpaceTimeField, TorusGrid, VectorField};
pub use hamiltonian::HamiltonianModel;
pub use problem::MfgProblem;
