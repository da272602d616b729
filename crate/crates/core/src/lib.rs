pub mod cli;
pub mod conformal;
pub mod diagnostics;
pub mod error;
pub mod panel;
pub mod qp;
pub mod simlab;
pub mod weights;

pub use error::{Error, Result};
