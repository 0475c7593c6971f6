//! Volume-renormalized mass of asymptotically Poincare-Einstein initial data,
//! reduced to warped products g = a(r)^2 dr^2 + b(r)^2 g_fiber.

pub mod constraints;
pub mod error;
pub mod evolution;
pub mod families;
pub mod geometry;
pub mod linalg;
pub mod mass;
pub mod reduced;
pub mod variation;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
