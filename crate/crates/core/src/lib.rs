pub mod agent;
pub mod branch;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod planner;
pub mod rng;
pub mod saliency;
pub mod sim;

pub use error::{Error, Result};
