//! Semi-analytical polygonal finite elements for 2D heat conduction.

pub mod element;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
