//! Numerical laboratory for the stochastic heat equation with super-linear
//! drift satisfying the Osgood condition.

pub mod alpha;
pub mod audit;
pub mod drift;
pub mod error;
pub mod family;
pub mod grid;
pub mod io;
pub mod noise;
pub mod ode;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod tower;
pub mod transform;
pub mod uniqueness;
pub mod weight;

pub use error::{Error, Result};
pub use tower::Tower;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
