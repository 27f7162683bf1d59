pub mod autodiff;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod model;
pub mod physics;
pub mod reference;
pub mod training;

pub use error::{Error, Result};
