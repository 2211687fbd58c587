pub mod cli;
pub mod crom;
pub mod data;
pub mod error;
pub mod model;
pub mod sim;
pub mod system;

pub use error::{Error, Result};

/// Fixed float format for CSV outputs: 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
