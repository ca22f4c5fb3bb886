//! Three-level gesture hierarchy over general value functions.

pub mod env;
pub mod error;
pub mod experiment;
pub mod gesture;
pub mod harness;
pub mod hierarchy;
pub mod selfcheck;
pub mod value;

pub use error::{Error, Result};
