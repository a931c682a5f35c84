pub mod cli;
pub mod constants;
pub mod error;
pub mod exponents;
pub mod gallery;
pub mod geometry;
pub mod measure;
pub mod operators;
pub mod sparse;
pub mod verification;

pub use error::{Error, Result};

/// Version stamped into every JSON report and config file.
pub const SCHEMA_VERSION: u32 = 1;
