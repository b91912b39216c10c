pub mod affine;
pub mod diffops;
pub mod error;
pub mod fields;
pub mod harness;
pub mod io;
pub mod oned;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
