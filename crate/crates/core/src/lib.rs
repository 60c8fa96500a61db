pub mod arm;
pub mod camera;
pub mod check;
pub mod config;
pub mod control;
pub mod error;
pub mod kinreg;
pub mod mathkit;
pub mod sim;

pub use error::{Error, Result};
