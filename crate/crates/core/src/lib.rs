//! Stochastic observability and constructability Gramians of discrete-time
//! linear systems with process and measurement noise.
//!
//! Gramians are Fisher information matrices of a window of measurements with
//! respect to the first (observability) or last (constructability) state.
//! They are available directly, through a dense measurement covariance, and
//! recursively with per-step `n×n` work.

pub mod deterministic;
pub mod direct;
pub mod duality;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod info;
pub mod io;
pub mod linalg;
pub mod recursive;
pub mod riccati;
pub mod sweep;
pub mod system;
pub mod trajectory;

pub use error::{Error, Result};
pub use info::{Direction, SymmetricInfoMatrix};
pub use io::{load_system, parse_system, LoadedSystem};
pub use system::{TimeInvariantLinearSystem, TimeVaryingLinearSystem, ValidationReport};
