pub mod error;
pub mod experiments;
pub mod grid;
pub mod kkt;
pub mod newton;
pub mod krylov;
pub mod schur;
pub mod spectral;
pub mod sparse;

pub use error::{Error, Result};
