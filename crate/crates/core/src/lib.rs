//! Numerical and combinatorial models of a Lefschetz fibration that complexifies
//! a Morse function: local quadric models, profile functions, Lagrangian surgery,
//! the regular fiber of a surface, homology, and the assembled fibration.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod cli;
pub mod error;
pub mod fiber_complex;
pub mod fibration;
pub mod homology;
pub mod local_model;
pub mod ode;
pub mod profiles;
pub mod report;
pub mod suite;
pub mod surgery;

pub use error::{Error, Result};
pub use report::Check;
