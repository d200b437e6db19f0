//! Arimoto-Blahut capacity computation with a convergence-speed diagnosis.
//!
//! Matrices follow the row-vector convention throughout: deviations evolve as
//! μ^{N+1} ≈ μ^N J, so entry (i′, i) of the Jacobian is ∂F_i/∂λ_{i′}. This is
//! the transpose of the more common layout.

pub mod analysis;
pub mod arimoto;
pub mod channel;
pub mod error;
pub mod hp;
pub mod numerics;
pub mod paper;
pub mod recurrence;
pub mod speed;
pub mod sweep;

pub use error::{Error, Result};
