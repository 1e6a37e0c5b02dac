pub mod diagnostics;
pub mod energy;
pub mod exact;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod quadrature;
pub mod scenario;
pub mod solver;
pub mod suites;
pub mod sources;

pub use error::{Error, Result};
