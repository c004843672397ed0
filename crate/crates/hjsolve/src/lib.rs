//! Mesh-free neural solver for Hamilton-Jacobi PDEs.
//!
//! Trains a coordinate MLP to satisfy an implicit characteristics-based
//! solution formula, with independent reference solvers (closed forms,
//! numerical Hopf-Lax evaluation, a monotone grid scheme) used to verify the
//! trained solutions.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod loss;
pub mod network;
pub mod timemarch;
pub mod trainer;
pub mod problems;

pub use error::{HjError, Result};
