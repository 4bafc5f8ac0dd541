pub mod error;
pub mod geometry;
pub mod nnls;
pub mod search;
pub mod dynamics;
pub mod mpc;
pub mod sim;
pub mod cli;

pub use error::{Error, Result};
