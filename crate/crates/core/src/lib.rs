pub mod ctaugment;
pub mod data;
pub mod error;
pub mod imaging;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
