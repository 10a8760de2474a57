//! Robust controlled invariant sets for linear systems with disturbance
//! preview, and certified bounds on how fast the preview benefit saturates.

pub mod error;
pub mod polytope;
pub mod solver;

pub use error::{Error, Result};
pub use polytope::{Box, HPolytope};
pub mod cli;
pub mod ellipsoid;
pub mod invariance;
pub mod io;
pub mod models;
pub mod mpc;
pub mod regret;
pub(crate) mod serde_mat;
pub mod systems;
